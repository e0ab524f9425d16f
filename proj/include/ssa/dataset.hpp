#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssa/random.hpp"
#include "ssa/sampling.hpp"

namespace ssa {

enum class DataKind : std::uint32_t { Char = 0, Word = 1, Grid = 2 };

std::string data_kind_name(DataKind kind);

// Tokenized corpus. The first train_count tokens are training data, the
// rest validation.
//
// SSADATA1 layout, little-endian:
//   "SSADATA1" | u32 version=1 | u32 kind | u32 grid_h | u32 grid_w |
//   u32 vocab | vocab x (u32 len, bytes) | u32 total | u32 train_count |
//   total x u32 token
struct TokenDataset {
  DataKind kind = DataKind::Char;
  std::optional<GridShape> grid;
  std::vector<std::string> vocab;
  std::vector<std::uint32_t> tokens;
  std::size_t train_count = 0;

  std::span<const std::uint32_t> train() const { return {tokens.data(), train_count}; }
  std::span<const std::uint32_t> valid() const {
    return {tokens.data() + train_count, tokens.size() - train_count};
  }
  void validate() const;
};

void write_dataset(const std::filesystem::path& path, const TokenDataset& data);
TokenDataset read_dataset(const std::filesystem::path& path);

// Fills `batch` training windows of length n + 1 (inputs plus shifted
// targets) at uniformly random offsets. Grid datasets draw whole grids.
struct Batch {
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> targets;
};
Batch sample_batch(std::span<const std::uint32_t> stream, std::size_t n, std::size_t batch, RandomSource& rng,
                   std::size_t align = 1);

}  // namespace ssa
