#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "ssa/error.hpp"
#include "ssa/sampling.hpp"

using namespace ssa;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Contract;
}

std::vector<std::size_t> to_vec(const Permutation& p) { return {p.indices().begin(), p.indices().end()}; }

double mean_displacement(const Permutation& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(double(p[i]) - double(i));
  return s / double(p.size());
}

// Independent simulation of the noisy-index argsort with a different engine
// and distribution implementation.
double oracle_displacement(std::size_t n, double sigma, int trials, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  double total = 0.0;
  std::vector<std::pair<double, std::size_t>> keys(n);
  for (int t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < n; ++i) keys[i] = {double(i) + noise(gen), i};
    std::sort(keys.begin(), keys.end());
    for (std::size_t s = 0; s < n; ++s) total += std::abs(double(keys[s].second) - double(s));
  }
  return total / (double(n) * trials);
}

// Homogeneity p-value of two (position x value) count tables, summing the
// per-position chi-square statistics.
double homogeneity_p(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  double chi2 = 0.0;
  std::size_t dof = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ra = 0.0, rb = 0.0;
    for (std::size_t j = 0; j < n; ++j) ra += a[i * n + j], rb += b[i * n + j];
    for (std::size_t j = 0; j < n; ++j) {
      const double col = a[i * n + j] + b[i * n + j];
      if (col == 0.0) continue;
      const double ea = col * ra / (ra + rb), eb = col * rb / (ra + rb);
      chi2 += (a[i * n + j] - ea) * (a[i * n + j] - ea) / ea + (b[i * n + j] - eb) * (b[i * n + j] - eb) / eb;
      ++dof;
    }
    --dof;
  }
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(double(dof)), chi2));
}

}  // namespace

TEST(Permutation, RejectsNonBijections) {
  EXPECT_EQ(kind_of([] { Permutation({0, 0, 1}); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([] { Permutation({0, 3}); }), ErrorKind::InvalidInput);
  EXPECT_TRUE(is_bijection(std::vector<std::size_t>{2, 0, 1}));
}

TEST(RandPerm, SmallCasesAndDeterminism) {
  RandomSource rng(1);
  EXPECT_EQ(to_vec(rand_perm(1, rng)), (std::vector<std::size_t>{0}));
  EXPECT_EQ(kind_of([&] { rand_perm(0, rng); }), ErrorKind::InvalidInput);
  RandomSource a(7), b(7);
  EXPECT_EQ(rand_perm(4, a), rand_perm(4, b));
}

TEST(RandPerm, CellFrequenciesWithinThreeSigma) {
  RandomSource rng(2);
  constexpr int trials = 100000;
  std::vector<double> counts(25, 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto p = rand_perm(5, rng);
    for (std::size_t i = 0; i < 5; ++i) counts[i * 5 + p[i]] += 1.0;
  }
  const double sd = std::sqrt(0.2 * 0.8 / trials);
  for (double c : counts) EXPECT_NEAR(c / trials, 0.2, 3 * sd);
}

TEST(LocalRandPerm, ZeroSigmaIsIdentity) {
  RandomSource rng(3);
  EXPECT_EQ(to_vec(local_rand_perm(5, 0.0, rng)), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  for (std::size_t n : {1u, 2u, 17u, 1000u, 10000u}) EXPECT_EQ(local_rand_perm(n, 0.0, rng), Permutation::identity(n));
  EXPECT_EQ(kind_of([&] { local_rand_perm(4, -1.0, rng); }), ErrorKind::InvalidInput);
}

TEST(LocalRandPerm, LargeSigmaIsUniform) {
  RandomSource rng(4);
  constexpr std::size_t n = 64;
  constexpr int trials = 100000;
  std::vector<double> counts(n * n, 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto p = local_rand_perm(n, 1e6, rng);
    for (std::size_t i = 0; i < n; ++i) counts[i * n + p[i]] += 1.0;
  }
  const double expected = double(trials) / n;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(double(n * (n - 1))), chi2));
  EXPECT_GT(p, 0.01);
}

TEST(LocalRandPerm, DisplacementMatchesIndependentSimulation) {
  RandomSource rng(5);
  constexpr std::size_t n = 3072;
  const double sigma = 0.2 * n;
  double ours = 0.0;
  constexpr int trials = 20;
  for (int t = 0; t < trials; ++t) ours += mean_displacement(local_rand_perm(n, sigma, rng));
  ours /= trials;
  const double ref = oracle_displacement(n, sigma, trials, 77);
  EXPECT_NEAR(ours / ref, 1.0, 0.02);
}

TEST(LocalRandPerm, DisplacementNondecreasingInSigma) {
  RandomSource rng(6);
  constexpr std::size_t n = 64;
  double previous = -1.0;
  for (double frac : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    double d = 0.0;
    for (int t = 0; t < 10000; ++t) d += mean_displacement(local_rand_perm(n, frac * n, rng));
    d /= 10000;
    EXPECT_GE(d, previous * 0.99) << "sigma frac " << frac;
    previous = d;
  }
}

TEST(CausalWindowedSources, ZeroSigmaExamples) {
  RandomSource rng(7);
  const auto one = causal_windowed_sources(8, 1, 0.0, rng);
  ASSERT_EQ(one.per_window.size(), 1u);
  EXPECT_EQ(one.per_window[0], (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  const auto four = causal_windowed_sources(8, 4, 0.0, rng);
  const std::vector<std::vector<std::size_t>> blocks{{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  EXPECT_EQ(four.per_window, blocks);
  EXPECT_TRUE(four.causal);
}

TEST(CausalWindowedSources, InvariantsHoldUnderNoise) {
  RandomSource rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t w = std::size_t(1) << (trial % 4);
    const auto s = causal_windowed_sources(64, w, 8.0 + trial % 5, rng);
    s.validate(64);
    const std::size_t span = 64 / w;
    for (std::size_t t = 0; t < w; ++t) {
      ASSERT_EQ(s.per_window[t].size(), span);
      EXPECT_NE(std::find(s.per_window[t].begin(), s.per_window[t].end(), t * span), s.per_window[t].end());
      for (auto j : s.per_window[t]) EXPECT_LT(j, (t + 1) * span);
    }
  }
}

TEST(CausalWindowedSources, DivisibilityAndSigmaErrors) {
  RandomSource rng(9);
  EXPECT_EQ(kind_of([&] { causal_windowed_sources(10, 4, 1.0, rng); }), ErrorKind::Divisibility);
  EXPECT_EQ(kind_of([&] { local_windowed_sources(10, 3, 1.0, rng); }), ErrorKind::Divisibility);
  EXPECT_EQ(kind_of([&] { causal_windowed_sources(8, 2, -1.0, rng); }), ErrorKind::InvalidInput);
}

TEST(WindowedSources, ValidateRejectsBrokenSets) {
  WindowedSources dup{{{0, 0}, {2, 3}}, false};
  EXPECT_EQ(kind_of([&] { dup.validate(4); }), ErrorKind::InvalidInput);
  WindowedSources future{{{0, 2}, {2, 3}}, true};
  EXPECT_EQ(kind_of([&] { future.validate(4); }), ErrorKind::InvalidInput);
  WindowedSources missing_first{{{0, 1}, {1, 3}}, true};
  EXPECT_EQ(kind_of([&] { missing_first.validate(4); }), ErrorKind::InvalidInput);
  WindowedSources ok{{{1, 0}, {3, 2}}, true};
  ok.validate(4);
}

TEST(UnbiasedSources, CausalForcesIndexZero) {
  RandomSource rng(10);
  for (int t = 0; t < 200; ++t) {
    const auto s = unbiased_sources(32, 3, true, rng);
    ASSERT_EQ(s.per_window.size(), 1u);
    ASSERT_EQ(s.per_window[0].size(), 3u);
    EXPECT_NE(std::find(s.per_window[0].begin(), s.per_window[0].end(), 0u), s.per_window[0].end());
  }
  EXPECT_EQ(kind_of([&] { unbiased_sources(8, 0, false, rng); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([&] { unbiased_sources(8, 9, false, rng); }), ErrorKind::InvalidInput);
}

TEST(LocalRandPerm2d, ZeroSigmaIdentity) {
  RandomSource rng(11);
  EXPECT_EQ(to_vec(local_rand_perm_2d(2, 2, 0.0, 0.0, rng)), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(local_rand_perm_2d(8, 8, 0.0, 0.0, rng), Permutation::identity(64));
}

TEST(LocalRandPerm2d, SingleRowMatchesOneDimensionalDistribution) {
  constexpr std::size_t n = 6;
  constexpr int trials = 10000;
  RandomSource a(12), b(13);
  std::vector<double> ca(n * n, 0.0), cb(n * n, 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto p = local_rand_perm_2d(1, n, 0.0, 1.5, a);
    const auto q = local_rand_perm(n, 1.5, b);
    for (std::size_t i = 0; i < n; ++i) {
      ca[i * n + p[i]] += 1.0;
      cb[i * n + q[i]] += 1.0;
    }
  }
  EXPECT_GT(homogeneity_p(ca, cb, n), 0.001);
}

TEST(LocalRandPerm2d, DisplacementMatchesIndependentSimulation) {
  constexpr std::size_t h = 8, w = 8;
  const double sigma = 0.25 * 8;
  RandomSource rng(14);
  constexpr int trials = 20000;
  double ours = 0.0;
  for (int t = 0; t < trials; ++t) ours += mean_displacement(local_rand_perm_2d(h, w, sigma, sigma, rng));
  ours /= trials;
  // Oracle: lexicographic sort of (r + row noise, c + column noise).
  std::mt19937 gen(5);
  std::normal_distribution<double> noise(0.0, sigma);
  double ref = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> rn(h), cn(w);
    for (auto& x : rn) x = noise(gen);
    for (auto& x : cn) x = noise(gen);
    std::vector<std::tuple<double, double, std::size_t>> keys;
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) keys.emplace_back(double(r) + rn[r], double(c) + cn[c], r * w + c);
    std::sort(keys.begin(), keys.end());
    double d = 0.0;
    for (std::size_t s = 0; s < keys.size(); ++s) d += std::abs(double(std::get<2>(keys[s])) - double(s));
    ref += d / double(keys.size());
  }
  ref /= trials;
  EXPECT_NEAR(ours / ref, 1.0, 0.02);
}

TEST(CausalWindowedSources2d, BandsRespectCausality) {
  RandomSource rng(15);
  const GridShape g{8, 8};
  for (int t = 0; t < 200; ++t) {
    const auto s = causal_windowed_sources_2d(g, 4, 2.0, 2.0, rng);
    s.validate(64);
    EXPECT_EQ(s.per_window.size(), 4u);
  }
}

TEST(SamplingProbability, UnbiasedKeepAllIsAllOnes) {
  RandomSource rng(16);
  const Tensor p = estimate_sampling_probability({SchemeKind::Unbiased, 0.0, {}}, 16, 16, 50, rng);
  for (float x : p.data()) EXPECT_EQ(x, 1.0f);
}

TEST(SamplingProbability, ZeroSigmaGaussianIsBlockDiagonal) {
  RandomSource rng(17);
  const Tensor p = estimate_sampling_probability({SchemeKind::Gaussian, 0.0, {}}, 16, 4, 20, rng);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(p.at(i, j), i / 4 == j / 4 ? 1.0f : 0.0f);
}

TEST(SamplingProbability, CausalGaussianShape) {
  RandomSource rng(18);
  constexpr std::size_t n = 64, w = 4, span = n / w;
  const Tensor p = estimate_sampling_probability({SchemeKind::CausalGaussian, 0.125, {}}, n, w, 10000, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) ASSERT_EQ(p.at(i, j), 0.0f);
  // Mass per source block decays with distance from the target window.
  for (std::size_t t = 1; t < w; ++t) {
    double previous = INFINITY;
    for (std::size_t back = 1; back <= t; ++back) {
      const std::size_t u = t - back;
      double m = 0.0;
      for (std::size_t i = t * span; i < (t + 1) * span; ++i)
        for (std::size_t j = u * span; j < (u + 1) * span; ++j) m += p.at(i, j);
      EXPECT_LT(m, previous) << "window " << t << " block " << u;
      previous = m;
    }
  }
  EXPECT_LT(mean_pair_distance(p), n / 4.0);
}

TEST(SamplingProbability, SchemeGridMismatch) {
  RandomSource rng(19);
  EXPECT_EQ(kind_of([&] {
              estimate_sampling_probability({SchemeKind::CausalGaussian2d, 0.1, GridShape{4, 4}}, 15, 4, 1, rng);
            }),
            ErrorKind::InvalidInput);
  EXPECT_EQ(parse_scheme("causal-gaussian-2d"), SchemeKind::CausalGaussian2d);
  EXPECT_EQ(kind_of([] { parse_scheme("fancy"); }), ErrorKind::Config);
}
