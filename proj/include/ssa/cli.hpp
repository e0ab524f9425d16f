#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssa/dataset.hpp"
#include "ssa/error.hpp"
#include "ssa/tensor.hpp"

namespace ssa::cli {

// Synthetic English-like text: pseudo-words built from syllables with
// Zipf-distributed frequencies and a sparse first-order word transition
// table, punctuated into sentences and paragraphs. Deterministic in seed.
std::string generate_corpus(std::size_t bytes, std::uint64_t seed);

struct IngestOptions {
  DataKind kind = DataKind::Char;
  double valid_fraction = 0.1;  // tail of the stream held out for validation
  std::size_t max_vocab = 10000;
  std::optional<GridShape> grid;  // grid mode; inferred from the first grid when absent
};

// char: one token per byte, vocabulary = bytes present, sorted.
// word: whitespace-separated words; the max_vocab - 1 most frequent (ties
//       by byte order) plus "<unk>" at id 0 when the cap bites.
// grid: blank-line separated grids, one row per line, whitespace-separated
//       cells, flattened row by row; split on whole grids.
TokenDataset ingest_text(const std::string& text, const IngestOptions& options);

// Reads a local path, or fetches a URL (file://, http://, https://).
std::string read_source(const std::string& path_or_url);

// Hex SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_sha1(std::string_view content);
std::string file_text(const std::filesystem::path& path);

// 8-bit binary PGM (P5) of a non-negative matrix scaled so its maximum is 255.
void write_pgm(const std::filesystem::path& path, const Tensor& matrix);
void write_matrix_csv(const std::filesystem::path& path, const Tensor& matrix, const std::string& comment);

struct Series {
  std::string label;
  std::vector<double> x, y;
};
void write_line_chart_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);

// Exit codes: 0 success, 1 usage, 2 data, 3 numeric.
int exit_code_for(ErrorKind kind);

// Entry point behind the ssa_lab executable.
int run(int argc, const char* const* argv);

}  // namespace ssa::cli
