#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssa/random.hpp"
#include "ssa/tensor.hpp"

namespace ssa {

// Bijective reordering of [0, n).
class Permutation {
 public:
  Permutation() = default;
  // Throws InvalidInput unless `indices` is a bijection on [0, size).
  explicit Permutation(std::vector<std::size_t> indices);
  static Permutation identity(std::size_t n);

  std::size_t size() const { return indices_.size(); }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }
  std::span<const std::size_t> indices() const { return indices_; }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> indices_;
};

bool is_bijection(std::span<const std::size_t> indices);

struct GridShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t cells() const { return height * width; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

// Realized source sets. Targets [0, n) are split into `per_window.size()`
// contiguous windows of equal length; window t attends to per_window[t].
// Unbiased subsampling is the single-window case with k sources.
struct WindowedSources {
  std::vector<std::vector<std::size_t>> per_window;
  bool causal = false;

  std::size_t window_count() const { return per_window.size(); }
  // Throws InvalidInput when the sets break the documented invariants:
  // in-range, distinct within a window, and (causal) bounded by the window
  // end with the window's first target index present.
  void validate(std::size_t n) const;
};

enum class SchemeKind { Unbiased, Gaussian, CausalGaussian, CausalGaussian2d };

std::string scheme_name(SchemeKind kind);
SchemeKind parse_scheme(const std::string& name);

struct SamplingScheme {
  SchemeKind kind = SchemeKind::Gaussian;
  double sigma_frac = 0.0;  // relative to the sequence length (or each grid axis)
  std::optional<GridShape> grid;

  void validate() const;
};

Permutation rand_perm(std::size_t n, RandomSource& rng);

// argsort({i + noise_i}) with noise_i ~ N(0, sigma_abs^2), stable on ties.
Permutation local_rand_perm(std::size_t n, double sigma_abs, RandomSource& rng);

// Separable 2-D shuffle: cell (r, c) gets key (r + row_noise[r], c + col_noise[c])
// and cells are re-linearized row by row in lexicographic key order.
Permutation local_rand_perm_2d(std::size_t height, std::size_t width, double sigma_h_abs, double sigma_w_abs,
                               RandomSource& rng);

// First k entries of a uniform permutation. When causal, index 0 is swapped
// into the last kept slot if it was not drawn, so no target is fully masked.
WindowedSources unbiased_sources(std::size_t n, std::size_t k, bool causal, RandomSource& rng);

// Non-causal locally biased sources: window t takes slots [t*n/w, (t+1)*n/w)
// of one shared local_rand_perm(n, sigma).
WindowedSources local_windowed_sources(std::size_t n, std::size_t w, double sigma_abs, RandomSource& rng);

// Causal locally biased sources. For window t ending at e = (t+1)*n/w, a fresh
// local permutation of [0, e) is drawn and its final n/w slots (aligned with
// the window's targets) become the sources; t*n/w is swapped in if absent.
WindowedSources causal_windowed_sources(std::size_t n, std::size_t w, double sigma_abs, RandomSource& rng);

// 2-D analogs over a row-major grid split into w horizontal bands of rows.
WindowedSources local_windowed_sources_2d(GridShape grid, std::size_t w, double sigma_h_abs, double sigma_w_abs,
                                          RandomSource& rng);
WindowedSources causal_windowed_sources_2d(GridShape grid, std::size_t w, double sigma_h_abs, double sigma_w_abs,
                                           RandomSource& rng);

// Monte-Carlo estimate of how often target i is paired with source j.
// `windows_or_keep` is k for Unbiased and the window count otherwise. For
// causal schemes a pair only counts when it survives the causal mask (j <= i),
// so every entry above the diagonal is exactly zero.
Tensor estimate_sampling_probability(const SamplingScheme& scheme, std::size_t n, std::size_t windows_or_keep,
                                     std::size_t trials, RandomSource& rng);

// Probability-weighted mean |i - j| of a pairing matrix.
double mean_pair_distance(const Tensor& probability);

}  // namespace ssa
