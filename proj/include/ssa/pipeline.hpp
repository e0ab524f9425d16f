#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ssa/config.hpp"
#include "ssa/cost.hpp"
#include "ssa/dataset.hpp"
#include "ssa/model.hpp"

namespace ssa {

enum class Phase { Ssa, Dense };

const char* phase_name(Phase phase);

struct MetricsRow {
  std::size_t step = 0;  // 0-based
  Phase phase = Phase::Ssa;
  double lr = 0.0;
  double train_loss = 0.0;  // nats per token
  double valid_loss = 0.0;  // nats per token; meaningful when has_valid
  bool has_valid = false;
  std::uint64_t flops_cum = 0;  // analytic training FLOPs through this step
  double wall_ms = 0.0;         // elapsed training time, evaluation excluded
};

struct TrainResult {
  std::unique_ptr<Model> model;
  SsaPlan plan;
  std::vector<MetricsRow> metrics;
  CostReport cost;
  std::size_t switch_step = 0;   // first dense fine-tuning step
  std::uint64_t score_macs = 0;  // measured Q K^T multiply-accumulates over all steps
  std::uint64_t score_flops = 0; // analytic score FLOPs over all steps (training)
  double final_valid_loss = 0.0;
  double initial_valid_loss = 0.0;
};

using ProgressFn = std::function<void(const MetricsRow&)>;

// Seeds: init derive_seed(seed, 0); batches derive_seed(seed, 1); SSA
// sampling derive_seed(seed, 2). The SSA plan is resampled at every step
// before the switch step and unused after it.
TrainResult train(const TrainConfig& config, const TokenDataset& data, const ProgressFn& progress = {});

// Resolves the model configuration for a dataset (vocabulary, grid).
ModelConfig resolve_model_config(const TrainConfig& config, const TokenDataset& data);

// Validation tokens used by training and by `eval` with default settings.
std::span<const std::uint32_t> validation_stream(const TokenDataset& data, std::size_t valid_tokens);

// Metrics CSV: "# schema=ssa-metrics/1 seed=.. plan=.. steps=.." then
// "step,phase,lr,train_loss,valid_loss,flops_cum,wall_ms".
void write_metrics_csv(const std::filesystem::path& path, const TrainConfig& config,
                       const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace ssa
