#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "ssa/config.hpp"
#include "ssa/cost.hpp"
#include "ssa/dataset.hpp"
#include "ssa/error.hpp"
#include "ssa/optimizer.hpp"
#include "ssa/pipeline.hpp"

using namespace ssa;

namespace {

// Order-1 Markov text over 8 symbols: learnable but not trivial.
TokenDataset markov_dataset(std::size_t total, std::uint64_t seed) {
  TokenDataset d;
  for (char c = 'a'; c < 'i'; ++c) d.vocab.emplace_back(1, c);
  RandomSource rng(seed);
  std::uint32_t cur = 0;
  for (std::size_t i = 0; i < total; ++i) {
    d.tokens.push_back(cur);
    cur = rng.uniform() < 0.8 ? (cur + 1) % 8 : static_cast<std::uint32_t>(rng.uniform_index(8));
  }
  d.train_count = total * 9 / 10;
  return d;
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.layer_count = 2;
  c.model.model_dim = 16;
  c.model.head_count = 2;
  c.model.ff_dim = 32;
  c.model.vocab_size = 0;
  c.model.max_len = 16;
  c.plan_tag = "S2-L4";
  c.sigma = {0.1, 0.225};
  c.steps = 20;
  c.warmup = 2;
  c.lr_peak = 3e-3;
  c.batch = 2;
  c.eval_interval = 5;
  c.valid_tokens = 64;
  c.finetune_fraction = 0.1;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Numeric;
}

// Straight-line forward FLOPs of one layer with s sources per query and kv
// projected source rows, two per multiply-accumulate.
double layer_flops(double n, double d, double f, double s, double kv) {
  const double q_and_out = 2 * n * d * d * 2;
  const double k_and_v = 2 * kv * d * d * 2;
  const double attention = 2 * (2 * n * s * d);
  return q_and_out + k_and_v + attention + 2 * (2 * n * d * f);
}

}  // namespace

TEST(Config, ParseAndSerializeRoundTrip) {
  const auto file = ConfigFile::parse(
      "# comment\nmodel.layers = 3\nmodel.dim = 32\nmodel.heads = 4\nssa.plan = S2-L4\ntrain.steps = 77\n"
      "train.finetune_fraction = 0.25\ndata.path = x.bin\n");
  const auto c = TrainConfig::from_file(file);
  EXPECT_EQ(c.model.layer_count, 3u);
  EXPECT_EQ(c.plan_tag, "S2-L4");
  EXPECT_EQ(c.steps, 77u);
  EXPECT_DOUBLE_EQ(c.finetune_fraction, 0.25);
  const auto again = TrainConfig::from_file(ConfigFile::parse(c.to_file().serialize()));
  EXPECT_EQ(again.to_file().serialize(), c.to_file().serialize());
}

TEST(Config, Rejections) {
  EXPECT_EQ(kind_of([] { TrainConfig::from_file(ConfigFile::parse("model.colour = red\n")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { ConfigFile::parse("a.b = 1\na.b = 2\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { ConfigFile::parse("no equals sign\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { TrainConfig::from_file(ConfigFile::parse("train.steps = -3\n")); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { TrainConfig::from_file(ConfigFile::parse("train.finetune_fraction = 0.6\n")).validate(); }),
            ErrorKind::Config);
}

TEST(Config, FinetuneStart) {
  EXPECT_EQ(finetune_start(1000, 0.10), 900u);
  EXPECT_EQ(finetune_start(1000, 0.0), 1000u);
  EXPECT_EQ(finetune_start(20, 0.1), 18u);
  EXPECT_EQ(finetune_start(7, 0.5), 4u);
}

TEST(Dataset, RoundTrip) {
  auto d = markov_dataset(500, 1);
  d.vocab[3] = "multi byte \xc3\xa9";
  const auto path = std::filesystem::temp_directory_path() / "ssa_pipeline_ds.bin";
  write_dataset(path, d);
  const auto back = read_dataset(path);
  EXPECT_EQ(back.tokens, d.tokens);
  EXPECT_EQ(back.vocab, d.vocab);
  EXPECT_EQ(back.train_count, d.train_count);
  EXPECT_EQ(back.kind, d.kind);
  std::filesystem::remove(path);
}

TEST(Dataset, BatchesAreShiftedWindows) {
  const auto d = markov_dataset(300, 2);
  RandomSource rng(3);
  const auto b = sample_batch(d.train(), 16, 4, rng);
  ASSERT_EQ(b.inputs.size(), 64u);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t i = 0; i + 1 < 16; ++i) EXPECT_EQ(b.targets[s * 16 + i], b.inputs[s * 16 + i + 1]);
}

TEST(Flops, ScoreTermsScaleExactly) {
  const auto cfg = desk_model_config();
  const auto dense = count_flops(cfg, parse_plan("S0", 4), 512);
  for (std::size_t w : {2, 4, 8}) {
    const auto f = count_flops(cfg, parse_plan("S4-L" + std::to_string(w), 4), 512);
    EXPECT_EQ(f.scores * w, dense.scores);
    EXPECT_EQ(f.values * w, dense.values);
  }
  const auto half = count_flops(cfg, parse_plan("S2-L4", 4), 512);
  EXPECT_EQ(half.layer_scores[0], dense.layer_scores[0]);
  EXPECT_EQ(half.layer_scores[3] * 4, dense.layer_scores[3]);
  const auto u = count_flops(cfg, parse_plan("S4-U75", 4), 512);
  EXPECT_EQ(u.scores * 512, dense.scores * 128);
}

TEST(Flops, MatchesStraightLineCount) {
  const auto cfg = desk_model_config();
  const double n = 512, d = cfg.model_dim, f = cfg.ff_dim, v = cfg.vocab_size;
  double expected = 2 * n * d * v;
  for (int l = 0; l < 4; ++l) expected += layer_flops(n, d, f, l < 2 ? n : n / 4, n);
  EXPECT_DOUBLE_EQ(double(count_flops(cfg, parse_plan("S2-L4", 4), 512).total()), expected);
  EXPECT_EQ(training_step_flops(cfg, parse_plan("S2-L4", 4), 512, 3), 9 * count_flops(cfg, parse_plan("S2-L4", 4), 512).total());
}

TEST(Flops, LargeScaleComputeRatio) {
  const auto cfg = large_model_config();
  const double n = 3072, d = 1024, f = 4096, v = 20000;
  double dense = 2 * n * d * v, local = dense;
  for (int l = 0; l < 16; ++l) {
    dense += layer_flops(n, d, f, n, n);
    local += layer_flops(n, d, f, n / 4, n);
  }
  const double ratio = local / dense;
  const double measured = double(count_flops(cfg, parse_plan("S16-L4", 16), 3072).total()) /
                          double(count_flops(cfg, parse_plan("S0", 16), 3072).total());
  EXPECT_NEAR(measured, ratio, 1e-12);
  EXPECT_GE(measured, 0.70);
  EXPECT_LE(measured, 0.85);
  // With a 10% dense tail the blended ratio stays in the same band.
  const double blended = 0.9 * measured + 0.1;
  EXPECT_GE(blended, 0.70);
  EXPECT_LE(blended, 0.85);
}

TEST(Memory, ScoreTermScalesWithSources) {
  const auto cfg = desk_model_config();
  const auto dense = estimate_peak_memory(cfg, parse_plan("S0", 4), 512, 4);
  const auto local = estimate_peak_memory(cfg, parse_plan("S4-L2", 4), 512, 4);
  EXPECT_EQ(local.scores * 2, dense.scores);
  EXPECT_EQ(local.state, dense.state);
  const double ratio = double(local.total()) / double(dense.total());
  EXPECT_GT(ratio, 0.5);
  EXPECT_LT(ratio, 1.0);

  const double p = double(parameter_count(cfg)), n = 512, d = 128, f = 512, v = 256, h = 4, b = 4;
  const double hand = 16 * p + 4 * b * (n * d + 4 * (n * (9 * d + 2 * f) + 2 * h * n * n) + n * d + 2 * n * v);
  EXPECT_DOUBLE_EQ(double(dense.total()), hand);

  const auto pcfg = large_model_config();
  const double large = double(estimate_peak_memory(pcfg, parse_plan("S16-L4", 16), 3072, 1).total()) /
                       double(estimate_peak_memory(pcfg, parse_plan("S0", 16), 3072, 1).total());
  EXPECT_GT(large, 0.25);
  EXPECT_LT(large, 1.0);
}

TEST(Cost, Normalization) {
  const CostReport base{"s0", "data", 100, 1e12, 4e9, 2.0};
  const auto same = normalize_costs(base, base);
  EXPECT_DOUBLE_EQ(same.compute, 1.0);
  EXPECT_DOUBLE_EQ(same.memory, 1.0);
  EXPECT_DOUBLE_EQ(same.speed, 1.0);
  const auto half = normalize_costs({"s4", "data", 100, 5e11, 4e9, 2.0}, base);
  EXPECT_DOUBLE_EQ(half.compute, 0.5);
  EXPECT_DOUBLE_EQ(half.memory, 1.0);
  EXPECT_EQ(kind_of([&] { normalize_costs({"x", "other", 100, 1, 1, 1}, base); }), ErrorKind::Comparability);
  EXPECT_EQ(kind_of([&] { normalize_costs({"x", "data", 50, 1, 1, 1}, base); }), ErrorKind::Comparability);
  EXPECT_EQ(kind_of([&] { normalize_costs({"x", "data", 100, 0, 1, 1}, base); }), ErrorKind::Comparability);
}

TEST(Schedule, WarmupThenCosine) {
  EXPECT_DOUBLE_EQ(learning_rate(0, 100, 10, 1e-3, 1e-4), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate(9, 100, 10, 1e-3, 1e-4), 1e-3);
  EXPECT_NEAR(learning_rate(99, 100, 10, 1e-3, 1e-4), 1e-4, 1e-12);
  double prev = 1.0;
  for (std::size_t s = 10; s < 100; ++s) {
    const double lr = learning_rate(s, 100, 10, 1e-3, 1e-4);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Training, SwitchesToDenseAndCountsFlops) {
  const auto data = markov_dataset(4000, 5);
  const auto cfg = small_config();
  const auto r = train(cfg, data);
  ASSERT_EQ(r.metrics.size(), 20u);
  EXPECT_EQ(r.switch_step, 18u);
  for (const auto& row : r.metrics) EXPECT_EQ(row.phase, row.step < 18 ? Phase::Ssa : Phase::Dense);
  for (std::size_t i = 1; i < r.metrics.size(); ++i) EXPECT_GT(r.metrics[i].flops_cum, r.metrics[i - 1].flops_cum);

  const auto mc = resolve_model_config(cfg, data);
  const auto plan = parse_plan(cfg.plan_tag, 2, cfg.sigma);
  const std::uint64_t expected = 18 * training_step_flops(mc, plan, 16, 2) + 2 * training_step_flops(mc, {}, 16, 2);
  EXPECT_EQ(r.metrics.back().flops_cum, expected);
  EXPECT_LT(r.final_valid_loss, r.initial_valid_loss);
  EXPECT_EQ(r.metrics.back().has_valid, true);
}

TEST(Training, DenseOnlyMatchesS0AndIsDeterministic) {
  const auto data = markov_dataset(4000, 6);
  auto cfg = small_config();
  cfg.plan_tag = "S0";
  const auto s0 = train(cfg, data);
  cfg.dense_only = true;
  const auto dense = train(cfg, data);
  ASSERT_EQ(s0.metrics.size(), dense.metrics.size());
  for (std::size_t i = 0; i < s0.metrics.size(); ++i) {
    EXPECT_EQ(s0.metrics[i].train_loss, dense.metrics[i].train_loss);
    EXPECT_EQ(s0.metrics[i].valid_loss, dense.metrics[i].valid_loss);
  }
  cfg.dense_only = false;
  cfg.plan_tag = "S2-U50";
  const auto a = train(cfg, data), b = train(cfg, data);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].train_loss, b.metrics[i].train_loss);
    EXPECT_EQ(a.metrics[i].valid_loss, b.metrics[i].valid_loss);
    EXPECT_EQ(a.metrics[i].flops_cum, b.metrics[i].flops_cum);
  }
}

TEST(Training, MetricsCsvRoundTrip) {
  const auto data = markov_dataset(4000, 7);
  const auto cfg = small_config();
  const auto r = train(cfg, data);
  const auto path = std::filesystem::temp_directory_path() / "ssa_pipeline_metrics.csv";
  write_metrics_csv(path, cfg, r.metrics);
  const auto back = read_metrics_csv(path);
  ASSERT_EQ(back.size(), r.metrics.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].phase, r.metrics[i].phase);
    EXPECT_EQ(back[i].flops_cum, r.metrics[i].flops_cum);
    EXPECT_EQ(back[i].has_valid, r.metrics[i].has_valid);
    EXPECT_NEAR(back[i].train_loss, r.metrics[i].train_loss, 1e-8 * std::abs(r.metrics[i].train_loss));
  }
  std::filesystem::remove(path);
}

TEST(Training, NonFiniteLossAborts) {
  const auto data = markov_dataset(4000, 8);
  auto cfg = small_config();
  cfg.lr_peak = 1e38;
  cfg.lr_final = 1e38;
  try {
    train(cfg, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("training aborted at step"), std::string::npos);
  }
}

TEST(Training, RejectsMismatchedInputs) {
  const auto data = markov_dataset(4000, 9);
  auto cfg = small_config();
  cfg.plan_tag = "S3-L4";
  EXPECT_EQ(kind_of([&] { train(cfg, data); }), ErrorKind::Parse);
  cfg = small_config();
  cfg.model.vocab_size = 4;
  EXPECT_EQ(kind_of([&] { train(cfg, data); }), ErrorKind::Config);
}
