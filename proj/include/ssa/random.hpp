#pragma once

#include <cstdint>
#include <random>

namespace ssa {

// Seedable pseudo-random source.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the standard.
// Everything derived from it is implemented here rather than through the
// <random> distributions, whose algorithms are implementation-defined:
//   uniform()        53 high bits of one draw, scaled to [0, 1)
//   uniform_index(n) Lemire's multiply-shift with rejection (unbiased)
//   normal()         Box-Muller on two uniforms; the sine branch is cached
//                    and returned by the following call
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform();
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer over (seed, stream); used to derive independent
// per-sample, per-replica and per-step seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ssa
