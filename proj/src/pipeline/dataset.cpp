#include "ssa/dataset.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ssa/error.hpp"

namespace ssa {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'A', 'D', 'A', 'T', 'A', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

void put_u32(std::ofstream& out, std::uint64_t v) {
  if (v > 0xffffffffu) fail(ErrorKind::Data, "value does not fit the 32-bit dataset field");
  const auto x = static_cast<std::uint32_t>(v);
  out.write(reinterpret_cast<const char*>(&x), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& what) {
  std::uint32_t x = 0;
  if (!in.read(reinterpret_cast<char*>(&x), 4)) fail(ErrorKind::Data, "truncated dataset while reading " + what);
  return x;
}

}  // namespace

std::string data_kind_name(DataKind kind) {
  switch (kind) {
    case DataKind::Char: return "char";
    case DataKind::Word: return "word";
    case DataKind::Grid: return "grid";
  }
  return "?";
}

void TokenDataset::validate() const {
  if (vocab.empty()) fail(ErrorKind::Data, "dataset has an empty vocabulary");
  if (train_count > tokens.size()) fail(ErrorKind::Data, "train split exceeds the token count");
  for (auto t : tokens)
    if (t >= vocab.size()) fail(ErrorKind::Data, "token id " + std::to_string(t) + " outside the vocabulary");
  if ((kind == DataKind::Grid) != grid.has_value()) fail(ErrorKind::Data, "grid shape must accompany grid data");
  if (grid && (grid->cells() == 0 || tokens.size() % grid->cells() != 0 || train_count % grid->cells() != 0)) {
    fail(ErrorKind::Data, "grid dataset must hold whole grids in each split");
  }
}

void write_dataset(const std::filesystem::path& path, const TokenDataset& data) {
  data.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write dataset " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(data.kind));
  put_u32(out, data.grid ? data.grid->height : 0);
  put_u32(out, data.grid ? data.grid->width : 0);
  put_u32(out, data.vocab.size());
  for (const auto& v : data.vocab) {
    put_u32(out, v.size());
    out.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  put_u32(out, data.tokens.size());
  put_u32(out, data.train_count);
  out.write(reinterpret_cast<const char*>(data.tokens.data()), static_cast<std::streamsize>(4 * data.tokens.size()));
  if (!out) fail(ErrorKind::Data, "failed writing dataset " + path.string());
}

TokenDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot read dataset " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    fail(ErrorKind::Data, path.string() + " is not an SSADATA1 file");
  }
  if (get_u32(in, "version") != kVersion) fail(ErrorKind::Data, "unsupported dataset version");
  TokenDataset d;
  const auto kind = get_u32(in, "kind");
  if (kind > 2) fail(ErrorKind::Data, "unknown dataset kind " + std::to_string(kind));
  d.kind = static_cast<DataKind>(kind);
  const auto h = get_u32(in, "grid height");
  const auto w = get_u32(in, "grid width");
  if (d.kind == DataKind::Grid) d.grid = GridShape{h, w};
  const auto vocab = get_u32(in, "vocab size");
  d.vocab.reserve(vocab);
  for (std::uint32_t i = 0; i < vocab; ++i) {
    const auto len = get_u32(in, "vocab entry");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) fail(ErrorKind::Data, "truncated vocabulary");
    d.vocab.push_back(std::move(s));
  }
  const auto total = get_u32(in, "token count");
  d.train_count = get_u32(in, "train count");
  d.tokens.resize(total);
  if (total && !in.read(reinterpret_cast<char*>(d.tokens.data()), std::streamsize(4) * total)) {
    fail(ErrorKind::Data, "truncated token array");
  }
  if (in.peek() != std::ifstream::traits_type::eof()) fail(ErrorKind::Data, "trailing bytes after token array");
  d.validate();
  return d;
}

Batch sample_batch(std::span<const std::uint32_t> stream, std::size_t n, std::size_t batch, RandomSource& rng,
                   std::size_t align) {
  if (n == 0 || batch == 0 || align == 0) fail(ErrorKind::InvalidInput, "batch shape must be positive");
  if (stream.size() < n + 1) {
    fail(ErrorKind::Data, "training split of " + std::to_string(stream.size()) + " tokens is shorter than context + 1");
  }
  Batch out;
  out.inputs.reserve(batch * n);
  out.targets.reserve(batch * n);
  // Aligned starts: grids begin at multiples of `align`; the target of the
  // last cell is the first cell of the next grid.
  const std::size_t starts = (stream.size() - n - 1) / align + 1;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t start = rng.uniform_index(starts) * align;
    out.inputs.insert(out.inputs.end(), stream.begin() + start, stream.begin() + start + n);
    out.targets.insert(out.targets.end(), stream.begin() + start + 1, stream.begin() + start + n + 1);
  }
  return out;
}

}  // namespace ssa
