#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <curl/curl.h>

#include "ssa/cli.hpp"

namespace ssa::cli {

namespace {

constexpr std::size_t kVocabLimit = std::size_t(1) << 24;

std::size_t train_split(std::size_t units, double valid_fraction) {
  const auto valid = static_cast<std::size_t>(std::llround(double(units) * valid_fraction));
  if (units < 2 || valid == 0 || valid >= units) {
    fail(ErrorKind::Data, "cannot split " + std::to_string(units) + " units with validation fraction " +
                              std::to_string(valid_fraction));
  }
  return units - valid;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

TokenDataset ingest_char(const std::string& text, const IngestOptions& o) {
  TokenDataset d;
  d.kind = DataKind::Char;
  bool present[256] = {};
  for (unsigned char c : text) present[c] = true;
  std::uint32_t id_of[256] = {};
  for (int b = 0; b < 256; ++b) {
    if (!present[b]) continue;
    id_of[b] = std::uint32_t(d.vocab.size());
    d.vocab.emplace_back(1, char(b));
  }
  if (d.vocab.size() > o.max_vocab) fail(ErrorKind::Data, "byte vocabulary exceeds --max-vocab");
  d.tokens.reserve(text.size());
  for (unsigned char c : text) d.tokens.push_back(id_of[c]);
  d.train_count = train_split(d.tokens.size(), o.valid_fraction);
  return d;
}

TokenDataset ingest_word(const std::string& text, const IngestOptions& o) {
  const auto words = split_ws(text);
  std::map<std::string, std::size_t> counts;
  for (const auto& w : words) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  TokenDataset d;
  d.kind = DataKind::Word;
  const bool capped = ranked.size() > o.max_vocab;
  if (capped) d.vocab.push_back("<unk>");
  std::map<std::string, std::uint32_t> id_of;
  for (const auto& [w, c] : ranked) {
    if (d.vocab.size() >= o.max_vocab) break;
    id_of[w] = std::uint32_t(d.vocab.size());
    d.vocab.push_back(w);
  }
  d.tokens.reserve(words.size());
  for (const auto& w : words) {
    auto it = id_of.find(w);
    d.tokens.push_back(it == id_of.end() ? 0u : it->second);
  }
  d.train_count = train_split(d.tokens.size(), o.valid_fraction);
  return d;
}

TokenDataset ingest_grid(const std::string& text, const IngestOptions& o) {
  std::vector<std::vector<std::vector<std::string>>> grids(1);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto cells = split_ws(line);
    if (cells.empty()) {
      if (!grids.back().empty()) grids.emplace_back();
      continue;
    }
    grids.back().push_back(std::move(cells));
  }
  if (grids.back().empty()) grids.pop_back();
  if (grids.empty()) fail(ErrorKind::Data, "grid source holds no grids");
  const GridShape shape = o.grid ? *o.grid : GridShape{grids[0].size(), grids[0][0].size()};
  std::map<std::string, std::uint32_t> id_of;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    if (grids[g].size() != shape.height) {
      fail(ErrorKind::Data, "grid " + std::to_string(g) + " has " + std::to_string(grids[g].size()) +
                                " rows, expected " + std::to_string(shape.height));
    }
    for (const auto& row : grids[g]) {
      if (row.size() != shape.width) {
        fail(ErrorKind::Data, "grid " + std::to_string(g) + " has a row of " + std::to_string(row.size()) +
                                  " cells, expected " + std::to_string(shape.width));
      }
      for (const auto& c : row) id_of.emplace(c, 0);
    }
  }
  if (id_of.size() > o.max_vocab) {
    fail(ErrorKind::Data, "grid vocabulary of " + std::to_string(id_of.size()) + " exceeds --max-vocab " +
                              std::to_string(o.max_vocab));
  }
  TokenDataset d;
  d.kind = DataKind::Grid;
  d.grid = shape;
  for (auto& [cell, id] : id_of) {
    id = std::uint32_t(d.vocab.size());
    d.vocab.push_back(cell);
  }
  for (const auto& grid : grids)
    for (const auto& row : grid)
      for (const auto& c : row) d.tokens.push_back(id_of[c]);
  d.train_count = train_split(grids.size(), o.valid_fraction) * shape.cells();
  return d;
}

std::size_t append_body(char* data, std::size_t size, std::size_t count, void* user) {
  static_cast<std::string*>(user)->append(data, size * count);
  return size * count;
}

}  // namespace

TokenDataset ingest_text(const std::string& text, const IngestOptions& options) {
  if (!(options.valid_fraction > 0.0 && options.valid_fraction < 1.0)) {
    fail(ErrorKind::Config, "validation fraction must lie in (0, 1)");
  }
  if (options.max_vocab < 2 || options.max_vocab > kVocabLimit) {
    fail(ErrorKind::Config, "--max-vocab must lie in [2, " + std::to_string(kVocabLimit) + "]");
  }
  if (options.kind != DataKind::Grid && options.grid) fail(ErrorKind::Config, "--grid applies to grid mode only");
  if (text.empty()) fail(ErrorKind::Data, "source is empty");
  TokenDataset d;
  switch (options.kind) {
    case DataKind::Char: d = ingest_char(text, options); break;
    case DataKind::Word: d = ingest_word(text, options); break;
    case DataKind::Grid: d = ingest_grid(text, options); break;
  }
  d.validate();
  return d;
}

std::string read_source(const std::string& path_or_url) {
  if (path_or_url.find("://") == std::string::npos) return file_text(path_or_url);
  CURL* curl = curl_easy_init();
  if (!curl) fail(ErrorKind::Data, "cannot initialize the URL fetcher");
  std::string body;
  curl_easy_setopt(curl, CURLOPT_URL, path_or_url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, append_body);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) fail(ErrorKind::Data, "cannot fetch " + path_or_url + ": " + curl_easy_strerror(rc));
  return body;
}

std::string file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ssa::cli
