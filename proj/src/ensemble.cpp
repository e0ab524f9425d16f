#include "ssa/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ssa/error.hpp"

namespace ssa {

namespace {

constexpr double kMinProbability = 1e-300;

double neg_log(double p) { return -std::log(std::max(p, kMinProbability)); }

// Softmax probabilities of each target under a logits tensor, in double.
std::vector<double> target_probabilities(const Tensor& logits, std::span<const std::uint32_t> targets) {
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  const auto data = logits.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = data.data() + r * vocab;
    double peak = row[0];
    for (std::size_t c = 1; c < vocab; ++c) peak = std::max(peak, double(row[c]));
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - peak);
    out[r] = std::exp(row[targets[r]] - peak) / z;
  }
  return out;
}

// Running totals over segments; every metric is a sum of nats until the end.
struct Totals {
  std::vector<double> per_sample_nats;
  std::vector<double> curve_nats;
  double dense_nats = 0.0;
  std::size_t scored = 0;
  std::size_t masked_rows = 0;
};

void check_segment(const Model& model, const EvalSegment& seg) {
  if (seg.inputs.empty() || seg.inputs.size() != seg.targets.size() || seg.score_from >= seg.inputs.size()) {
    fail(ErrorKind::InvalidInput, "evaluation segment needs matching inputs/targets and a scored position");
  }
  for (auto t : seg.targets) {
    if (t >= model.config().vocab_size) fail(ErrorKind::InvalidInput, "target outside the model vocabulary");
  }
}

// Evaluates one segment with `samples` SSA passes seeded from `seed`,
// adding into totals. When rows is non-null the aggregated and dense
// probability rows are returned through it.
void evaluate_segment(const Model& model, const EvalSegment& seg, const EnsembleSpec& spec, std::size_t samples,
                      std::uint64_t seed, Totals& totals, EnsemblePrediction* rows) {
  check_segment(model, seg);
  NoGradGuard no_grad;
  const std::size_t n = seg.inputs.size();
  const std::size_t vocab = model.config().vocab_size;
  const std::span<const std::uint32_t> targets(seg.targets);

  RandomSource unused(0);
  const Tensor dense_logits = model.forward(seg.inputs, 1, spec.plan, ForwardMode::Dense, unused);
  const auto dense_p = target_probabilities(dense_logits, targets);
  for (std::size_t i = seg.score_from; i < n; ++i) totals.dense_nats += neg_log(dense_p[i]);
  totals.scored += n - seg.score_from;

  std::vector<double> prob_sum(n, 0.0);        // MeanProbability: running sum of target probs
  std::vector<double> logit_sum(n * vocab, 0.0);  // MeanValue: running sum of logits
  std::vector<double> row_sum;
  if (rows) row_sum.assign(n * vocab, 0.0);
  totals.per_sample_nats.resize(std::max(totals.per_sample_nats.size(), samples), 0.0);
  totals.curve_nats.resize(std::max(totals.curve_nats.size(), samples), 0.0);

  for (std::size_t s = 0; s < samples; ++s) {
    RandomSource rng(derive_seed(seed, s));
    AttentionStats stats;
    const Tensor logits = model.forward(seg.inputs, 1, spec.plan, ForwardMode::TrainSsa, rng,
                                        {MaskedRowPolicy::ZeroFill, &stats});
    totals.masked_rows += stats.masked_rows;
    const auto p = target_probabilities(logits, targets);
    for (std::size_t i = seg.score_from; i < n; ++i) totals.per_sample_nats[s] += neg_log(p[i]);

    if (spec.aggregation == Aggregation::MeanProbability) {
      for (std::size_t i = 0; i < n; ++i) prob_sum[i] += p[i];
      for (std::size_t i = seg.score_from; i < n; ++i) totals.curve_nats[s] += neg_log(prob_sum[i] / double(s + 1));
    } else {
      const auto data = logits.data();
      for (std::size_t i = 0; i < logit_sum.size(); ++i) logit_sum[i] += data[i];
      std::vector<float> mean(logit_sum.size());
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = static_cast<float>(logit_sum[i] / double(s + 1));
      const auto pm = target_probabilities(Tensor::from_data({n, vocab}, std::move(mean)), targets);
      for (std::size_t i = seg.score_from; i < n; ++i) totals.curve_nats[s] += neg_log(pm[i]);
    }
    if (rows) {
      if (spec.aggregation == Aggregation::MeanProbability) {
        const auto probs = softmax_probabilities(logits);
        for (std::size_t i = 0; i < row_sum.size(); ++i) row_sum[i] += probs[i];
      } else {
        const auto data = logits.data();
        for (std::size_t i = 0; i < row_sum.size(); ++i) row_sum[i] += data[i];
      }
    }
  }
  if (rows) {
    rows->vocab = vocab;
    rows->dense_probs = softmax_probabilities(dense_logits);
    std::vector<float> mean(row_sum.size());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = static_cast<float>(row_sum[i] / double(samples));
    rows->mean_probs = spec.aggregation == Aggregation::MeanProbability
                           ? std::move(mean)
                           : softmax_probabilities(Tensor::from_data({n, vocab}, std::move(mean)));
  }
}

EnsembleResult finish(const Totals& totals) {
  const double scale = 1.0 / (double(totals.scored) * std::numbers::ln2);
  EnsembleResult r;
  for (double v : totals.per_sample_nats) r.per_sample.push_back(v * scale);
  for (double v : totals.curve_nats) r.curve.push_back(v * scale);
  r.aggregate = r.curve.empty() ? 0.0 : r.curve.back();
  r.renormalized = totals.dense_nats * scale;
  r.masked_rows = totals.masked_rows;
  return r;
}

}  // namespace

void EnsembleSpec::validate(const Model& model) const {
  if (samples == 0) fail(ErrorKind::InvalidInput, "ensemble needs at least one sample");
  if (plan.layers.size() != model.config().layer_count) {
    fail(ErrorKind::Config, "ensemble plan '" + plan.tag + "' does not match the model depth");
  }
}

std::vector<float> softmax_probabilities(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  const auto data = logits.data();
  std::vector<float> out(rows * vocab);
  std::vector<double> e(vocab);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = data.data() + r * vocab;
    double peak = row[0];
    for (std::size_t c = 1; c < vocab; ++c) peak = std::max(peak, double(row[c]));
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) z += (e[c] = std::exp(row[c] - peak));
    for (std::size_t c = 0; c < vocab; ++c) out[r * vocab + c] = static_cast<float>(e[c] / z);
  }
  return out;
}

double bits_from_nats(double nats) { return nats / std::numbers::ln2; }

EnsemblePrediction self_ensemble_predict(const Model& model, std::span<const std::uint32_t> inputs,
                                         std::span<const std::uint32_t> targets, const EnsembleSpec& spec) {
  spec.validate(model);
  const EvalSegment seg{{inputs.begin(), inputs.end()}, {targets.begin(), targets.end()}, 0};
  Totals totals;
  EnsemblePrediction out;
  evaluate_segment(model, seg, spec, spec.samples, spec.seed, totals, &out);
  out.result = finish(totals);
  return out;
}

EnsembleResult ensemble_curve(const Model& model, std::span<const EvalSegment> segments, std::size_t max_samples,
                              const EnsembleSpec& spec) {
  if (max_samples == 0) fail(ErrorKind::InvalidInput, "ensemble curve needs at least one sample");
  if (segments.empty()) fail(ErrorKind::InvalidInput, "ensemble curve needs at least one segment");
  spec.validate(model);
  Totals totals;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    evaluate_segment(model, segments[i], spec, max_samples, derive_seed(spec.seed, i), totals, nullptr);
  }
  return finish(totals);
}

std::vector<EvalSegment> sliding_segments(std::span<const std::uint32_t> stream, std::size_t context,
                                          std::size_t overlap) {
  if (context == 0 || overlap >= context) {
    fail(ErrorKind::InvalidInput, "sliding window needs 0 <= overlap < context");
  }
  if (stream.size() < 2) fail(ErrorKind::Data, "evaluation stream needs at least two tokens");
  auto make = [&](std::size_t start, std::size_t len, std::size_t score_from) {
    EvalSegment seg;
    seg.inputs.assign(stream.begin() + start, stream.begin() + start + len);
    seg.targets.assign(stream.begin() + start + 1, stream.begin() + start + len + 1);
    seg.score_from = score_from;
    return seg;
  };
  std::vector<EvalSegment> out;
  if (stream.size() < context + 1) {
    out.push_back(make(0, stream.size() - 1, 0));
    return out;
  }
  const std::size_t stride = context - overlap;
  // Targets are stream positions 1..size-1; `scored_to` is one past the last scored.
  std::size_t scored_to = 1;
  for (std::size_t start = 0; start + context + 1 <= stream.size(); start += stride) {
    const std::size_t first_target = start + 1;
    out.push_back(make(start, context, scored_to - first_target));
    scored_to = start + context + 1;
  }
  if (scored_to < stream.size()) {
    const std::size_t start = stream.size() - context - 1;
    out.push_back(make(start, context, scored_to - (start + 1)));
  }
  return out;
}

SlidingEvalResult sliding_window_eval(const Model& model, std::span<const std::uint32_t> stream,
                                      std::size_t context, std::size_t overlap, EvalMode mode,
                                      const EnsembleSpec& spec) {
  const auto segments = sliding_segments(stream, context, overlap);
  SlidingEvalResult out;
  out.windows = segments.size();
  for (const auto& s : segments) out.scored += s.inputs.size() - s.score_from;
  if (mode == EvalMode::Ensemble) {
    out.ensemble = ensemble_curve(model, segments, spec.samples, spec);
    out.bits_per_token = out.ensemble.aggregate;
    out.nats_per_token = out.bits_per_token * std::numbers::ln2;
    return out;
  }
  NoGradGuard no_grad;
  RandomSource unused(0);
  const SsaPlan dense;
  double nats = 0.0;
  for (const auto& seg : segments) {
    check_segment(model, seg);
    const auto p = target_probabilities(model.forward(seg.inputs, 1, dense, ForwardMode::Dense, unused), seg.targets);
    for (std::size_t i = seg.score_from; i < p.size(); ++i) nats += neg_log(p[i]);
  }
  out.nats_per_token = nats / double(out.scored);
  // Same scaling as the ensemble path so one S0 sample reproduces this bit for bit.
  out.bits_per_token = nats * (1.0 / (double(out.scored) * std::numbers::ln2));
  return out;
}

void write_ensemble_csv(const std::filesystem::path& path, const EnsembleResult& result, const EnsembleSpec& spec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out << "# schema=ssa-ensemble/1 seed=" << spec.seed << " samples=" << spec.samples << " plan=" << spec.plan.tag
      << "\n";
  out << "samples,bits_per_token,single_sample_bits,renormalized_bits\n";
  char line[160];
  for (std::size_t s = 0; s < result.curve.size(); ++s) {
    std::snprintf(line, sizeof line, "%zu,%.9f,%.9f,%.9f\n", s + 1, result.curve[s], result.per_sample[s],
                  result.renormalized);
    out << line;
  }
}

}  // namespace ssa
