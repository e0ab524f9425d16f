#include "ssa/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssa/ensemble.hpp"
#include "ssa/error.hpp"
#include "ssa/ops.hpp"
#include "ssa/optimizer.hpp"

namespace ssa {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

const char* phase_name(Phase phase) { return phase == Phase::Ssa ? "ssa" : "dense"; }

ModelConfig resolve_model_config(const TrainConfig& config, const TokenDataset& data) {
  ModelConfig m = config.model;
  if (m.vocab_size == 0) m.vocab_size = data.vocab.size();
  if (m.vocab_size < data.vocab.size()) {
    fail(ErrorKind::Config, "model.vocab " + std::to_string(m.vocab_size) + " is smaller than the dataset vocabulary " +
                                std::to_string(data.vocab.size()));
  }
  if (data.grid) {
    if (!m.grid) m.grid = data.grid;
    if (m.grid->height != data.grid->height || m.grid->width != data.grid->width) {
      fail(ErrorKind::Config, "model.grid does not match the dataset grid");
    }
  }
  m.validate();
  return m;
}

std::span<const std::uint32_t> validation_stream(const TokenDataset& data, std::size_t valid_tokens) {
  auto v = data.valid();
  if (v.size() < 2) fail(ErrorKind::Data, "dataset has fewer than two validation tokens");
  return v.first(std::min(v.size(), valid_tokens));
}

TrainResult train(const TrainConfig& config, const TokenDataset& data, const ProgressFn& progress) {
  config.validate();
  data.validate();
  TrainResult out;
  const ModelConfig mc = resolve_model_config(config, data);
  const std::size_t n = mc.max_len;
  const bool causal = mc.mask_kind == MaskKind::Causal;
  out.plan = parse_plan(config.plan_tag, mc.layer_count, config.sigma, causal);
  const SsaPlan dense_plan = parse_plan("S0", mc.layer_count, config.sigma, causal);
  out.model = std::make_unique<Model>(mc, derive_seed(config.seed, 0));
  Model& model = *out.model;

  RandomSource data_rng(derive_seed(config.seed, 1));
  RandomSource ssa_rng(derive_seed(config.seed, 2));
  std::vector<Tensor> params;
  for (auto& p : model.named_parameters()) params.push_back(p.tensor);
  Adam adam(params, {config.beta1, config.beta2, 1e-8, config.clip});

  const auto train_stream = data.train();
  const auto valid = validation_stream(data, config.valid_tokens);
  const std::size_t align = data.grid ? data.grid->cells() : 1;
  auto validate_now = [&] {
    return sliding_window_eval(model, valid, n, 0, EvalMode::Dense).nats_per_token;
  };
  out.initial_valid_loss = validate_now();

  out.switch_step = config.dense_only ? 0 : finetune_start(config.steps, config.finetune_fraction);
  const std::uint64_t ssa_step_flops = training_step_flops(mc, out.plan, n, config.batch);
  const std::uint64_t dense_step_flops = training_step_flops(mc, dense_plan, n, config.batch);
  const auto ssa_scores = count_flops(mc, out.plan, n).scores;
  const auto dense_scores = count_flops(mc, dense_plan, n).scores;

  std::uint64_t flops = 0;
  double phase_ms[2] = {0.0, 0.0};
  std::size_t phase_steps[2] = {0, 0};
  double train_ms = 0.0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Phase phase = step < out.switch_step ? Phase::Ssa : Phase::Dense;
    const auto t0 = Clock::now();
    const double lr = learning_rate(step, config.steps, config.warmup, config.lr_peak, config.lr_final);
    const Batch batch = sample_batch(train_stream, n, config.batch, data_rng, align);
    model.zero_grad();
    AttentionStats stats;
    double loss_value = 0.0;
    try {
      const Tensor logits = model.forward(batch.inputs, config.batch, out.plan,
                                          phase == Phase::Ssa ? ForwardMode::TrainSsa : ForwardMode::Dense, ssa_rng,
                                          {MaskedRowPolicy::Throw, &stats});
      const Tensor loss = cross_entropy(logits, batch.targets);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) fail(ErrorKind::Numeric, "non-finite loss");
      backward(loss);
      adam.step(lr);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::MaskedRow) throw;
      throw Error(e.kind(), "training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    const double step_ms = ms_since(t0);
    train_ms += step_ms;
    const int p = phase == Phase::Ssa ? 0 : 1;
    phase_ms[p] += step_ms;
    ++phase_steps[p];

    flops += phase == Phase::Ssa ? ssa_step_flops : dense_step_flops;
    out.score_flops += 3 * config.batch * (phase == Phase::Ssa ? ssa_scores : dense_scores);
    out.score_macs += stats.score_macs;

    MetricsRow row;
    row.step = step;
    row.phase = phase;
    row.lr = lr;
    row.train_loss = loss_value;
    row.flops_cum = flops;
    row.wall_ms = train_ms;
    if ((step + 1) % config.eval_interval == 0 || step + 1 == config.steps) {
      row.has_valid = true;
      row.valid_loss = validate_now();
      out.final_valid_loss = row.valid_loss;
    }
    out.metrics.push_back(row);
    if (progress) progress(row);
  }

  // Memory and speed average per step across the two phases.
  const double ssa_mem = double(estimate_peak_memory(mc, out.plan, n, config.batch).total());
  const double dense_mem = double(estimate_peak_memory(mc, dense_plan, n, config.batch).total());
  const double steps = double(config.steps);
  out.cost.run = config.plan_tag;
  out.cost.dataset = config.data_path;
  out.cost.steps = config.steps;
  out.cost.compute = double(flops);
  out.cost.peak_memory = (double(phase_steps[0]) * ssa_mem + double(phase_steps[1]) * dense_mem) / steps;
  double speed = 0.0;
  for (int p = 0; p < 2; ++p) {
    if (phase_steps[p]) speed += double(phase_steps[p]) * (double(phase_steps[p]) / (phase_ms[p] / 1000.0));
  }
  out.cost.speed = speed / steps;
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const TrainConfig& config,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out << "# schema=ssa-metrics/1 seed=" << config.seed << " plan=" << config.plan_tag << " steps=" << config.steps
      << " finetune_fraction=" << config.finetune_fraction << "\n";
  out << "step,phase,lr,train_loss,valid_loss,flops_cum,wall_ms\n";
  char line[256];
  for (const auto& r : rows) {
    char valid[40] = "";
    if (r.has_valid) std::snprintf(valid, sizeof valid, "%.9g", r.valid_loss);
    std::snprintf(line, sizeof line, "%zu,%s,%.9g,%.9g,%s,%llu,%.3f\n", r.step, phase_name(r.phase), r.lr,
                  r.train_loss, valid, static_cast<unsigned long long>(r.flops_cum), r.wall_ms);
    out << line;
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Data, "cannot read " + path.string());
  std::string line;
  std::vector<MetricsRow> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "step,phase,lr,train_loss,valid_loss,flops_cum,wall_ms") fail(ErrorKind::Data, "bad metrics header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) fail(ErrorKind::Data, "bad metrics row: " + line);
    MetricsRow r;
    try {
      r.step = std::stoul(f[0]);
      r.phase = f[1] == "ssa" ? Phase::Ssa : Phase::Dense;
      r.lr = std::stod(f[2]);
      r.train_loss = std::stod(f[3]);
      r.has_valid = !f[4].empty();
      if (r.has_valid) r.valid_loss = std::stod(f[4]);
      r.flops_cum = std::stoull(f[5]);
      r.wall_ms = std::stod(f[6]);
    } catch (const std::exception&) {
      fail(ErrorKind::Data, "bad metrics row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ssa
