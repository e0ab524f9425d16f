#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "ssa/ensemble.hpp"
#include "ssa/error.hpp"
#include "ssa/model.hpp"

using namespace ssa;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.layer_count = 2;
  c.model_dim = 16;
  c.head_count = 2;
  c.ff_dim = 32;
  c.vocab_size = 13;
  c.max_len = 32;
  return c;
}

// Parameters pushed off init so the SSA variants disagree visibly.
std::unique_ptr<Model> trained_like(std::uint64_t seed) {
  auto m = std::make_unique<Model>(small_config(), seed);
  RandomSource rng(seed + 1);
  for (auto& p : m->named_parameters())
    for (auto& v : p.tensor.mutable_data()) v += static_cast<float>(0.5 * rng.normal());
  return m;
}

std::vector<std::uint32_t> stream(std::size_t n, std::uint64_t seed) {
  RandomSource rng(seed);
  std::vector<std::uint32_t> out(n);
  for (auto& t : out) t = static_cast<std::uint32_t>(rng.uniform_index(13));
  return out;
}

EnsembleSpec spec_for(const std::string& tag, std::size_t samples, std::uint64_t seed) {
  EnsembleSpec s;
  s.samples = samples;
  s.plan = parse_plan(tag, 2, {0.1, 0.225});
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Ensemble, OneDensePlanSampleIsTheDenseMetric) {
  const auto owner = trained_like(1);
  const Model& m = *owner;
  const auto s = stream(200, 2);
  const auto segs = sliding_segments(s, 32, 8);
  const auto r = ensemble_curve(m, segs, 1, spec_for("S0", 1, 3));
  EXPECT_EQ(r.curve[0], r.renormalized);
  EXPECT_EQ(r.per_sample[0], r.renormalized);
  const auto dense = sliding_window_eval(m, s, 32, 8, EvalMode::Dense);
  EXPECT_EQ(dense.bits_per_token, r.renormalized);
}

TEST(Ensemble, AggregatedRowsAreDistributions) {
  const auto owner = trained_like(4);
  const Model& m = *owner;
  const auto s = stream(33, 5);
  const std::vector<std::uint32_t> in(s.begin(), s.end() - 1), tgt(s.begin() + 1, s.end());
  for (auto agg : {Aggregation::MeanProbability, Aggregation::MeanValue}) {
    auto spec = spec_for("S2-L4", 10, 6);
    spec.aggregation = agg;
    const auto p = self_ensemble_predict(m, in, tgt, spec);
    ASSERT_EQ(p.mean_probs.size(), 32u * 13u);
    for (std::size_t r = 0; r < 32; ++r) {
      double total = 0.0, dense = 0.0;
      for (std::size_t c = 0; c < 13; ++c) {
        total += p.mean_probs[r * 13 + c];
        dense += p.dense_probs[r * 13 + c];
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
      EXPECT_NEAR(dense, 1.0, 1e-6);
    }
  }
}

TEST(Ensemble, CurveStartsAtTheFirstSampleAndIsDeterministic) {
  const auto owner = trained_like(7);
  const Model& m = *owner;
  const auto segs = sliding_segments(stream(120, 8), 32, 0);
  const auto spec = spec_for("S2-L4", 8, 9);
  const auto a = ensemble_curve(m, segs, 8, spec);
  const auto b = ensemble_curve(m, segs, 8, spec);
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(a.per_sample, b.per_sample);
  EXPECT_EQ(a.curve[0], a.per_sample[0]);
  EXPECT_EQ(a.aggregate, a.curve.back());
  // A longer run extends the same prefix.
  const auto c = ensemble_curve(m, segs, 12, spec);
  for (std::size_t s = 0; s < 8; ++s) EXPECT_EQ(c.curve[s], a.curve[s]);
  // Mean probability is at least as good as the average single sample (Jensen).
  double mean_single = 0.0;
  for (double v : a.per_sample) mean_single += v / 8.0;
  EXPECT_LE(a.aggregate, mean_single + 1e-12);
}

TEST(Ensemble, AveragingShrinksVariance) {
  const auto owner = trained_like(10);
  const Model& m = *owner;
  const auto s = stream(33, 11);
  const std::vector<std::uint32_t> in(s.begin(), s.end() - 1), tgt(s.begin() + 1, s.end());
  auto metric_spread = [&](std::size_t samples) {
    std::vector<double> v;
    for (std::uint64_t seed = 0; seed < 30; ++seed)
      v.push_back(self_ensemble_predict(m, in, tgt, spec_for("S2-U50", samples, 1000 + seed)).result.aggregate);
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x / double(v.size());
    for (double x : v) var += (x - mean) * (x - mean) / double(v.size() - 1);
    return var;
  };
  EXPECT_GT(metric_spread(1), 3.0 * metric_spread(25));
}

TEST(Sliding, NoOverlapScoresEachPositionOnce) {
  const auto s = stream(101, 1);
  const auto segs = sliding_segments(s, 32, 0);
  std::vector<int> hits(s.size(), 0);
  std::size_t offset = 0;
  for (const auto& seg : segs) {
    // Locate the window by its inputs.
    for (offset = 0; offset + seg.inputs.size() <= s.size(); ++offset)
      if (std::equal(seg.inputs.begin(), seg.inputs.end(), s.begin() + offset)) break;
    for (std::size_t i = seg.score_from; i < seg.inputs.size(); ++i) {
      EXPECT_EQ(seg.targets[i], s[offset + i + 1]);
      ++hits[offset + i + 1];
    }
  }
  EXPECT_EQ(hits[0], 0);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_EQ(hits[i], 1) << i;
}

TEST(Sliding, MaximalOverlapGivesFullContext) {
  const auto s = stream(60, 2);
  const auto segs = sliding_segments(s, 16, 15);
  std::size_t scored = 0;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (k > 0) {
      EXPECT_EQ(segs[k].score_from, 15u);
    }
    scored += segs[k].inputs.size() - segs[k].score_from;
  }
  EXPECT_EQ(scored, s.size() - 1);
}

TEST(Sliding, ShortStreamIsOneWindow) {
  const auto s = stream(10, 3);
  const auto segs = sliding_segments(s, 32, 0);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].inputs.size(), 9u);
  EXPECT_EQ(segs[0].score_from, 0u);
  EXPECT_THROW(sliding_segments(s, 8, 8), Error);
}

TEST(Ensemble, RejectsBadSpecs) {
  const auto owner = trained_like(1);
  const Model& m = *owner;
  const auto segs = sliding_segments(stream(40, 1), 32, 0);
  auto spec = spec_for("S2-L4", 0, 1);
  EXPECT_THROW(ensemble_curve(m, segs, 0, spec), Error);
  spec = spec_for("S2-L4", 2, 1);
  spec.plan = parse_plan("S1-L4", 3);
  EXPECT_THROW(ensemble_curve(m, segs, 2, spec), Error);
}
