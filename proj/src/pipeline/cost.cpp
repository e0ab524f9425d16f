#include "ssa/cost.hpp"

#include "ssa/error.hpp"

namespace ssa {

std::size_t sources_per_query(const LayerPlan& layer, std::size_t n) {
  switch (layer.kind) {
    case LayerPlan::Kind::Dense: return n;
    case LayerPlan::Kind::Unbiased: return keep_count(layer.drop_percent, n);
    case LayerPlan::Kind::Local:
      if (layer.windows == 0 || n % layer.windows != 0) {
        fail(ErrorKind::Divisibility, std::to_string(layer.windows) + " windows do not divide N=" + std::to_string(n));
      }
      return n / layer.windows;
  }
  return n;
}

namespace {

// Rows fed to the K and V projections: k for unbiased SSA, else all N
// (local windows gather N/w rows each, N in total).
std::size_t projected_sources(const LayerPlan& layer, std::size_t n) {
  return layer.kind == LayerPlan::Kind::Unbiased ? keep_count(layer.drop_percent, n) : n;
}

void check_plan(const ModelConfig& config, const SsaPlan& plan) {
  config.validate();
  if (!plan.layers.empty() && plan.layers.size() != config.layer_count) {
    fail(ErrorKind::Config, "plan '" + plan.tag + "' does not match the model depth");
  }
}

LayerPlan layer_of(const SsaPlan& plan, std::size_t l) { return plan.layers.empty() ? LayerPlan{} : plan.layers[l]; }

}  // namespace

FlopsBreakdown count_flops(const ModelConfig& config, const SsaPlan& plan, std::size_t n) {
  check_plan(config, plan);
  const std::uint64_t d = config.model_dim, f = config.ff_dim, v = config.vocab_size, N = n;
  FlopsBreakdown out;
  for (std::size_t l = 0; l < config.layer_count; ++l) {
    const auto layer = layer_of(plan, l);
    const std::uint64_t s = sources_per_query(layer, n);
    const std::uint64_t kv = projected_sources(layer, n);
    out.projections += 2 * (2 * N + 2 * kv) * d * d;
    const std::uint64_t scores = 2 * N * s * d;  // heads * N * s * (d / heads)
    out.scores += scores;
    out.values += scores;
    out.layer_scores.push_back(scores);
    out.feed_forward += 2 * 2 * N * d * f;
  }
  out.output = 2 * N * d * v;
  return out;
}

std::uint64_t training_step_flops(const ModelConfig& config, const SsaPlan& plan, std::size_t n, std::size_t batch) {
  return 3 * count_flops(config, plan, n).total() * batch;
}

MemoryEstimate estimate_peak_memory(const ModelConfig& config, const SsaPlan& plan, std::size_t n, std::size_t batch) {
  check_plan(config, plan);
  const std::uint64_t d = config.model_dim, f = config.ff_dim, v = config.vocab_size, h = config.head_count;
  const std::uint64_t N = n, B = batch;
  MemoryEstimate out;
  out.state = 16 * std::uint64_t(parameter_count(config));
  std::uint64_t floats = N * d + N * d + 2 * N * v;
  for (std::size_t l = 0; l < config.layer_count; ++l) {
    const std::uint64_t scores = 4 * B * 2 * h * N * sources_per_query(layer_of(plan, l), n);
    out.layer_scores.push_back(scores);
    out.scores += scores;
    floats += N * (9 * d + 2 * f);
  }
  out.activations = 4 * B * floats + out.scores;
  return out;
}

NormalizedCost normalize_costs(const CostReport& run, const CostReport& baseline) {
  if (run.dataset != baseline.dataset || run.steps != baseline.steps) {
    fail(ErrorKind::Comparability, "run '" + run.run + "' (" + run.dataset + ", " + std::to_string(run.steps) +
                                       " steps) is not comparable to baseline '" + baseline.run + "' (" +
                                       baseline.dataset + ", " + std::to_string(baseline.steps) + " steps)");
  }
  for (const auto* r : {&run, &baseline}) {
    if (!(r->compute > 0.0 && r->peak_memory > 0.0 && r->speed > 0.0)) {
      fail(ErrorKind::Comparability, "cost report '" + r->run + "' has non-positive entries");
    }
  }
  return {run.compute / baseline.compute, run.peak_memory / baseline.peak_memory, run.speed / baseline.speed};
}

ModelConfig desk_model_config() { return ModelConfig{}; }

ModelConfig large_model_config() {
  ModelConfig c;
  c.layer_count = 16;
  c.model_dim = 1024;
  c.head_count = 8;
  c.ff_dim = 4096;
  c.vocab_size = 20000;
  c.max_len = 3072;
  return c;
}

}  // namespace ssa
