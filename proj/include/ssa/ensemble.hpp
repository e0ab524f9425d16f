#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssa/model.hpp"

namespace ssa {

enum class Aggregation { MeanProbability, MeanValue };

// Inference-time self-ensemble: `samples` SSA forward passes under `plan`,
// sample s drawing from RandomSource(derive_seed(seed, s)).
struct EnsembleSpec {
  std::size_t samples = 50;
  SsaPlan plan;
  Aggregation aggregation = Aggregation::MeanProbability;
  std::uint64_t seed = 0;

  void validate(const Model& model) const;
};

// Metrics are bits per token: -log2 of the (aggregated) probability of the
// target, averaged over scored positions.
struct EnsembleResult {
  std::vector<double> per_sample;  // metric of each single sample
  std::vector<double> curve;       // metric of the prefix mean over samples 1..s
  double aggregate = 0.0;          // == curve.back()
  double renormalized = 0.0;       // dense single-pass metric
  std::size_t masked_rows = 0;     // zero-filled attention rows across samples
};

struct EnsemblePrediction {
  std::vector<float> mean_probs;   // [N, vocab], aggregated rows
  std::vector<float> dense_probs;  // [N, vocab], renormalized prediction
  std::size_t vocab = 0;
  EnsembleResult result;
};

// Row-wise softmax of logits, computed in double.
std::vector<float> softmax_probabilities(const Tensor& logits);

double bits_from_nats(double nats);

EnsemblePrediction self_ensemble_predict(const Model& model, std::span<const std::uint32_t> inputs,
                                         std::span<const std::uint32_t> targets, const EnsembleSpec& spec);

// One evaluation segment: the model reads `inputs` and is scored on targets
// at positions [score_from, N).
struct EvalSegment {
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> targets;
  std::size_t score_from = 0;
};

// Metric-vs-samples curve over segments. Segment i uses seeds derived from
// derive_seed(spec.seed, i), so the curve is a pure function of the seed.
EnsembleResult ensemble_curve(const Model& model, std::span<const EvalSegment> segments, std::size_t max_samples,
                              const EnsembleSpec& spec);

// Windows of `context` tokens advancing by context - overlap. The first
// window scores all its positions; later windows score their final
// context - overlap positions; a final window aligned to the stream end picks
// up any remainder. Streams shorter than context + 1 yield one window over
// the whole stream.
std::vector<EvalSegment> sliding_segments(std::span<const std::uint32_t> stream, std::size_t context,
                                          std::size_t overlap);

enum class EvalMode { Dense, Ensemble };

struct SlidingEvalResult {
  double bits_per_token = 0.0;
  double nats_per_token = 0.0;
  std::size_t scored = 0;
  std::size_t windows = 0;
  EnsembleResult ensemble;  // Ensemble mode only
};

SlidingEvalResult sliding_window_eval(const Model& model, std::span<const std::uint32_t> stream,
                                      std::size_t context, std::size_t overlap, EvalMode mode,
                                      const EnsembleSpec& spec = {});

// CSV: "# schema=ssa-ensemble/1 seed=<seed> samples=<S> plan=<tag>", then
// header "samples,bits_per_token,single_sample_bits,renormalized_bits".
void write_ensemble_csv(const std::filesystem::path& path, const EnsembleResult& result, const EnsembleSpec& spec);

}  // namespace ssa
