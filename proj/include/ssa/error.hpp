#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssa {

// Error families. The CLI maps each family to an exit code.
enum class ErrorKind {
  Dimension,
  InvalidInput,
  Contract,
  MaskedRow,
  Divisibility,
  Parse,
  Config,
  Data,
  Compatibility,
  Comparability,
  Numeric,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a softmax row has no finite entry. `window` is npos for
// unwindowed attention; `layer` is filled in by the model when it propagates.
class MaskedRowError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  MaskedRowError(std::size_t row, std::size_t window = npos, std::size_t layer = npos);

  std::size_t row() const noexcept { return row_; }
  std::size_t window() const noexcept { return window_; }
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t row_;
  std::size_t window_;
  std::size_t layer_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace ssa
