#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssa/model.hpp"

namespace ssa {

// Forward FLOPs for one sequence of length n, two per multiply-accumulate.
// Attention sources per query: N (dense), k (unbiased), N/w (local).
struct FlopsBreakdown {
  std::uint64_t projections = 0;  // Q, K, V, output projections
  std::uint64_t scores = 0;       // Q K^T
  std::uint64_t values = 0;       // probs V
  std::uint64_t feed_forward = 0;
  std::uint64_t output = 0;       // vocabulary head
  std::vector<std::uint64_t> layer_scores;

  std::uint64_t total() const { return projections + scores + values + feed_forward + output; }
};

FlopsBreakdown count_flops(const ModelConfig& config, const SsaPlan& plan, std::size_t n);

// One optimizer step: forward plus a backward pass costed at twice the
// forward, over `batch` sequences.
std::uint64_t training_step_flops(const ModelConfig& config, const SsaPlan& plan, std::size_t n, std::size_t batch);

// Analytic peak bytes with float32 storage:
//   state        16 P        (weights, gradients, two Adam moments)
//   activations  4 B [ N d + sum_l (N (9 d + 2 f) + 2 H N S_l) + N d + 2 N V ]
// where S_l is the number of sources per query in layer l; the 2 H N S_l
// term holds the score and probability matrices.
struct MemoryEstimate {
  std::uint64_t state = 0;
  std::uint64_t activations = 0;
  std::uint64_t scores = 0;  // part of activations
  std::vector<std::uint64_t> layer_scores;

  std::uint64_t total() const { return state + activations; }
};

MemoryEstimate estimate_peak_memory(const ModelConfig& config, const SsaPlan& plan, std::size_t n, std::size_t batch);

// Sources each query attends to in a layer of the given plan.
std::size_t sources_per_query(const LayerPlan& layer, std::size_t n);

struct CostReport {
  std::string run;
  std::string dataset;
  std::size_t steps = 0;
  double compute = 0.0;      // total training FLOPs
  double peak_memory = 0.0;  // bytes; per-step average across phases
  double speed = 0.0;        // measured steps per second; per-step average across phases
};

struct NormalizedCost {
  double compute = 0.0;
  double memory = 0.0;
  double speed = 0.0;
};

// Throws a Comparability error unless both runs share dataset and steps.
NormalizedCost normalize_costs(const CostReport& run, const CostReport& baseline);

// Desk- and large-preset presets used by the cost tables.
ModelConfig desk_model_config();
// 16 layers, d 1024, 8 heads, ff 4096, N 3072; the 20000-entry head stands
// in for an adaptive softmax over a large vocabulary.
ModelConfig large_model_config();

}  // namespace ssa
