#include "ssa/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssa/error.hpp"
#include "ssa/ops.hpp"

namespace ssa {

namespace {

void require_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    fail(ErrorKind::InvalidInput, "sigma must be a finite nonnegative value, got " + std::to_string(sigma));
  }
}

void require_divides(std::size_t n, std::size_t w, const char* what) {
  if (w == 0 || n % w != 0) {
    fail(ErrorKind::Divisibility, std::string(what) + ": " + std::to_string(w) + " windows do not divide " +
                                      std::to_string(n));
  }
}

// Moves `index` into slot `slot` of `order` by swapping, if it sits before it.
void force_into_slot(std::vector<std::size_t>& order, std::size_t slot, std::size_t index) {
  auto it = std::find(order.begin(), order.end(), index);
  const auto pos = static_cast<std::size_t>(it - order.begin());
  if (pos < slot) std::swap(order[pos], order[slot]);
}

// The final `count` slots of `order`, with `required` forced into the first
// of them; the slot-aligned construction shared by the causal schemes.
std::vector<std::size_t> causal_tail(std::vector<std::size_t> order, std::size_t count, std::size_t required) {
  const std::size_t first = order.size() - count;
  force_into_slot(order, first, required);
  return {order.begin() + static_cast<std::ptrdiff_t>(first), order.end()};
}

}  // namespace

bool is_bijection(std::span<const std::size_t> indices) {
  std::vector<bool> seen(indices.size(), false);
  for (auto i : indices) {
    if (i >= indices.size() || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

Permutation::Permutation(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  if (!is_bijection(indices_)) fail(ErrorKind::InvalidInput, "permutation indices are not a bijection");
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return Permutation(std::move(idx));
}

void WindowedSources::validate(std::size_t n) const {
  const std::size_t w = per_window.size();
  require_divides(n, w, "windowed sources");
  const std::size_t span = n / w;
  for (std::size_t t = 0; t < w; ++t) {
    const auto& list = per_window[t];
    const std::size_t limit = causal ? (t + 1) * span : n;
    std::vector<bool> seen(n, false);
    for (auto j : list) {
      if (j >= limit) {
        fail(ErrorKind::InvalidInput, "window " + std::to_string(t) + " source " + std::to_string(j) +
                                          " beyond limit " + std::to_string(limit));
      }
      if (seen[j]) fail(ErrorKind::InvalidInput, "window " + std::to_string(t) + " repeats source " + std::to_string(j));
      seen[j] = true;
    }
    if (list.empty()) fail(ErrorKind::InvalidInput, "window " + std::to_string(t) + " has no sources");
    // Unbiased causal selections are a single window whose first target is 0.
    if (causal && !seen[t * span]) {
      fail(ErrorKind::InvalidInput, "window " + std::to_string(t) + " lacks its first target " +
                                        std::to_string(t * span));
    }
  }
}

std::string scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Unbiased: return "unbiased";
    case SchemeKind::Gaussian: return "gaussian";
    case SchemeKind::CausalGaussian: return "causal-gaussian";
    case SchemeKind::CausalGaussian2d: return "causal-gaussian-2d";
  }
  return "?";
}

SchemeKind parse_scheme(const std::string& name) {
  for (auto kind : {SchemeKind::Unbiased, SchemeKind::Gaussian, SchemeKind::CausalGaussian,
                    SchemeKind::CausalGaussian2d}) {
    if (scheme_name(kind) == name) return kind;
  }
  fail(ErrorKind::Config, "unknown sampling scheme '" + name + "'");
}

void SamplingScheme::validate() const {
  require_sigma(sigma_frac);
  const bool is_2d = kind == SchemeKind::CausalGaussian2d;
  if (is_2d != grid.has_value()) {
    fail(ErrorKind::InvalidInput, "scheme " + scheme_name(kind) + (is_2d ? " requires" : " does not take") +
                                      " a grid shape");
  }
  if (grid && grid->cells() == 0) fail(ErrorKind::InvalidInput, "grid must have at least one cell");
}

Permutation rand_perm(std::size_t n, RandomSource& rng) {
  if (n == 0) fail(ErrorKind::InvalidInput, "rand_perm: n must be positive");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
  return Permutation(std::move(idx));
}

Permutation local_rand_perm(std::size_t n, double sigma_abs, RandomSource& rng) {
  if (n == 0) fail(ErrorKind::InvalidInput, "local_rand_perm: n must be positive");
  require_sigma(sigma_abs);
  std::vector<double> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = double(i) + sigma_abs * rng.normal();
  return Permutation(stable_argsort(keys));
}

Permutation local_rand_perm_2d(std::size_t height, std::size_t width, double sigma_h_abs, double sigma_w_abs,
                               RandomSource& rng) {
  if (height == 0 || width == 0) fail(ErrorKind::InvalidInput, "local_rand_perm_2d: empty grid");
  require_sigma(sigma_h_abs);
  require_sigma(sigma_w_abs);
  std::vector<double> row_key(height), col_key(width);
  for (std::size_t r = 0; r < height; ++r) row_key[r] = double(r) + sigma_h_abs * rng.normal();
  for (std::size_t c = 0; c < width; ++c) col_key[c] = double(c) + sigma_w_abs * rng.normal();
  // Lexicographic order of separable keys is the product of the two axis orders.
  const auto rows = stable_argsort(row_key);
  const auto cols = stable_argsort(col_key);
  std::vector<std::size_t> idx;
  idx.reserve(height * width);
  for (auto r : rows)
    for (auto c : cols) idx.push_back(r * width + c);
  return Permutation(std::move(idx));
}

WindowedSources unbiased_sources(std::size_t n, std::size_t k, bool causal, RandomSource& rng) {
  if (k == 0 || k > n) {
    fail(ErrorKind::InvalidInput, "unbiased subsampling keeps k in [1, " + std::to_string(n) + "], got " +
                                      std::to_string(k));
  }
  auto perm = rand_perm(n, rng);
  std::vector<std::size_t> order(perm.indices().begin(), perm.indices().end());
  if (causal) {
    // Index 0 was not drawn when it sits past the kept prefix.
    const auto pos = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0u) - order.begin());
    if (pos >= k) std::swap(order[pos], order[k - 1]);
  }
  order.resize(k);
  return {{std::move(order)}, causal};
}

WindowedSources local_windowed_sources(std::size_t n, std::size_t w, double sigma_abs, RandomSource& rng) {
  require_divides(n, w, "local_windowed_sources");
  const auto perm = local_rand_perm(n, sigma_abs, rng);
  const std::size_t span = n / w;
  WindowedSources out;
  for (std::size_t t = 0; t < w; ++t) {
    auto first = perm.indices().begin() + static_cast<std::ptrdiff_t>(t * span);
    out.per_window.emplace_back(first, first + static_cast<std::ptrdiff_t>(span));
  }
  return out;
}

WindowedSources causal_windowed_sources(std::size_t n, std::size_t w, double sigma_abs, RandomSource& rng) {
  require_divides(n, w, "causal_windowed_sources");
  require_sigma(sigma_abs);
  const std::size_t span = n / w;
  WindowedSources out;
  out.causal = true;
  for (std::size_t t = 0; t < w; ++t) {
    const auto perm = local_rand_perm((t + 1) * span, sigma_abs, rng);
    out.per_window.push_back(causal_tail({perm.indices().begin(), perm.indices().end()}, span, t * span));
  }
  return out;
}

WindowedSources local_windowed_sources_2d(GridShape grid, std::size_t w, double sigma_h_abs, double sigma_w_abs,
                                          RandomSource& rng) {
  require_divides(grid.height, w, "local_windowed_sources_2d (rows)");
  const auto perm = local_rand_perm_2d(grid.height, grid.width, sigma_h_abs, sigma_w_abs, rng);
  const std::size_t span = grid.cells() / w;
  WindowedSources out;
  for (std::size_t t = 0; t < w; ++t) {
    auto first = perm.indices().begin() + static_cast<std::ptrdiff_t>(t * span);
    out.per_window.emplace_back(first, first + static_cast<std::ptrdiff_t>(span));
  }
  return out;
}

WindowedSources causal_windowed_sources_2d(GridShape grid, std::size_t w, double sigma_h_abs, double sigma_w_abs,
                                           RandomSource& rng) {
  require_divides(grid.height, w, "causal_windowed_sources_2d (rows)");
  const std::size_t band = grid.height / w;
  const std::size_t span = band * grid.width;
  WindowedSources out;
  out.causal = true;
  for (std::size_t t = 0; t < w; ++t) {
    const auto perm = local_rand_perm_2d((t + 1) * band, grid.width, sigma_h_abs, sigma_w_abs, rng);
    out.per_window.push_back(causal_tail({perm.indices().begin(), perm.indices().end()}, span, t * span));
  }
  return out;
}

Tensor estimate_sampling_probability(const SamplingScheme& scheme, std::size_t n, std::size_t windows_or_keep,
                                     std::size_t trials, RandomSource& rng) {
  scheme.validate();
  if (trials == 0) fail(ErrorKind::InvalidInput, "trials must be positive");
  if (n == 0) fail(ErrorKind::InvalidInput, "n must be positive");
  if (scheme.grid && scheme.grid->cells() != n) {
    fail(ErrorKind::InvalidInput, "grid " + std::to_string(scheme.grid->height) + "x" +
                                      std::to_string(scheme.grid->width) + " does not have n=" + std::to_string(n) +
                                      " cells");
  }
  std::vector<double> counts(n * n, 0.0);
  const double sigma = scheme.sigma_frac * double(n);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    WindowedSources sources;
    switch (scheme.kind) {
      case SchemeKind::Unbiased:
        sources = unbiased_sources(n, windows_or_keep, false, rng);
        break;
      case SchemeKind::Gaussian:
        sources = local_windowed_sources(n, windows_or_keep, sigma, rng);
        break;
      case SchemeKind::CausalGaussian:
        sources = causal_windowed_sources(n, windows_or_keep, sigma, rng);
        break;
      case SchemeKind::CausalGaussian2d: {
        const auto g = *scheme.grid;
        sources = causal_windowed_sources_2d(g, windows_or_keep, scheme.sigma_frac * double(g.height),
                                             scheme.sigma_frac * double(g.width), rng);
        break;
      }
    }
    const std::size_t span = n / sources.window_count();
    for (std::size_t t = 0; t < sources.window_count(); ++t) {
      for (std::size_t i = t * span; i < (t + 1) * span; ++i) {
        for (auto j : sources.per_window[t]) {
          if (sources.causal && j > i) continue;
          counts[i * n + j] += 1.0;
        }
      }
    }
  }
  std::vector<float> probs(n * n);
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = static_cast<float>(counts[i] / double(trials));
  return Tensor::from_data({n, n}, std::move(probs));
}

double mean_pair_distance(const Tensor& probability) {
  const std::size_t n = probability.dim(0);
  double mass = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p = probability.data()[i * n + j];
      mass += p;
      weighted += p * (i > j ? double(i - j) : double(j - i));
    }
  }
  return mass > 0.0 ? weighted / mass : 0.0;
}

}  // namespace ssa
