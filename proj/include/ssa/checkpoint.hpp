#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssa/model.hpp"

namespace ssa {

// Checkpoint layout, all integers little-endian:
//   8 bytes  magic "SSACKPT1"
//   u32      format version (1)
//   u32      tensor count
//   per tensor:
//     u32    name length, then that many UTF-8 bytes
//     u32    rank, then rank x u32 extents
//     raw float32 little-endian values, row-major
inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'A', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const Model& model);
// Copies stored values into the model's parameters. Missing, extra or
// differently shaped tensors raise a compatibility error naming them.
void load_model(const std::filesystem::path& path, Model& model);

}  // namespace ssa
