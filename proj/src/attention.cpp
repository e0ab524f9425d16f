#include "ssa/attention.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "ssa/error.hpp"

namespace ssa {

namespace {

constexpr float kMasked = -std::numeric_limits<float>::infinity();

std::size_t distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

// Number of stacked sequences in x, checking the layout against the bias.
std::size_t batch_of(const Tensor& x, const AttentionBias& bias) {
  if (x.rank() != 2) fail(ErrorKind::Dimension, "attention input must be 2-D, got " + shape_string(x.shape()));
  const std::size_t n = bias.size();
  if (n == 0 || x.dim(0) % n != 0) {
    fail(ErrorKind::Dimension, "attention input has " + std::to_string(x.dim(0)) + " rows for bias size " +
                                   std::to_string(n));
  }
  return x.dim(0) / n;
}

// Core over an optional source selection (null = every source, in order).
Tensor attend(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
              const WindowedSources* sources, const AttentionContext& ctx) {
  const std::size_t batch = batch_of(x, bias);
  params.validate(x.dim(1));
  if (bias.heads() != params.head_count) {
    fail(ErrorKind::Dimension, "bias has " + std::to_string(bias.heads()) + " heads, params have " +
                                   std::to_string(params.head_count));
  }
  const std::size_t n = bias.size();
  const std::size_t heads = params.head_count;
  const std::size_t dk = params.key_dim();
  const std::size_t dv = params.value_dim();

  // Source lists per window; dense is one window holding every position.
  std::vector<std::vector<std::size_t>> identity;
  const std::vector<std::vector<std::size_t>>* lists = nullptr;
  if (sources) {
    sources->validate(n);
    lists = &sources->per_window;
  } else {
    identity.emplace_back(n);
    for (std::size_t j = 0; j < n; ++j) identity[0][j] = j;
    lists = &identity;
  }
  const std::size_t windows = lists->size();
  const std::size_t span = n / windows;
  std::vector<std::size_t> window_offset(windows + 1, 0);
  for (std::size_t t = 0; t < windows; ++t) window_offset[t + 1] = window_offset[t] + (*lists)[t].size();
  const std::size_t per_sequence = window_offset[windows];

  // Sources are gathered (reindexed) once, before projection.
  Tensor x_source = x;
  if (sources) {
    std::vector<std::size_t> rows;
    rows.reserve(batch * per_sequence);
    for (std::size_t b = 0; b < batch; ++b)
      for (const auto& list : *lists)
        for (auto j : list) rows.push_back(b * n + j);
    x_source = gather_rows(x, rows);
  }
  const Tensor q = matmul(x, params.w_q);
  const Tensor k = matmul(x_source, params.w_k);
  const Tensor v = matmul(x_source, params.w_v);
  const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  std::vector<float> block;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, dk);
    const Tensor kh = slice_cols(k, h * dk, dk);
    const Tensor vh = slice_cols(v, h * dv, dv);
    std::vector<Tensor> pieces(batch * windows);
    for (std::size_t t = 0; t < windows; ++t) {
      const auto& list = (*lists)[t];
      // Bias columns travel with their original source index.
      block.resize(span * list.size());
      for (std::size_t i = 0; i < span; ++i)
        for (std::size_t c = 0; c < list.size(); ++c) block[i * list.size() + c] = bias.at(h, t * span + i, list[c]);
      SoftmaxOptions softmax{block, ctx.policy, ctx.stats ? &ctx.stats->masked_rows : nullptr};
      for (std::size_t b = 0; b < batch; ++b) {
        const Tensor qw = slice_rows(qh, b * n + t * span, span);
        const Tensor kw = slice_rows(kh, b * per_sequence + window_offset[t], list.size());
        const Tensor vw = slice_rows(vh, b * per_sequence + window_offset[t], list.size());
        Tensor probs;
        try {
          probs = softmax_rows(scale(matmul_nt(qw, kw), inv_sqrt_dk), softmax);
        } catch (const MaskedRowError& e) {
          throw MaskedRowError(t * span + e.row(), sources ? t : MaskedRowError::npos);
        }
        pieces[b * windows + t] = matmul(probs, vw);
        if (ctx.stats) {
          ctx.stats->score_macs += std::uint64_t(span) * list.size() * dk;
          ctx.stats->value_macs += std::uint64_t(span) * list.size() * dv;
        }
      }
    }
    head_outputs.push_back(pieces.size() == 1 ? pieces[0] : concat_rows(pieces));
  }
  return heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
}

}  // namespace

std::string mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::None: return "none";
    case MaskKind::Causal: return "causal";
    case MaskKind::Padding: return "padding";
  }
  return "?";
}

std::string rel_kind_name(RelKind kind) {
  switch (kind) {
    case RelKind::None: return "none";
    case RelKind::Alibi: return "alibi";
    case RelKind::Axial2d: return "axial-2d";
  }
  return "?";
}

MaskKind parse_mask_kind(const std::string& name) {
  for (auto k : {MaskKind::None, MaskKind::Causal, MaskKind::Padding})
    if (mask_kind_name(k) == name) return k;
  fail(ErrorKind::Config, "unknown mask kind '" + name + "'");
}

RelKind parse_rel_kind(const std::string& name) {
  for (auto k : {RelKind::None, RelKind::Alibi, RelKind::Axial2d})
    if (rel_kind_name(k) == name) return k;
  fail(ErrorKind::Config, "unknown relative-position kind '" + name + "'");
}

double alibi_slope(std::size_t head, std::size_t head_count) {
  return std::exp2(-8.0 * double(head + 1) / double(head_count));
}

AttentionBias::AttentionBias(std::size_t n, std::size_t heads, MaskKind mask, RelKind rel, std::vector<float> values)
    : n_(n), heads_(heads), mask_(mask), rel_(rel), values_(std::move(values)) {
  if (values_.size() != heads_ * n_ * n_) fail(ErrorKind::Dimension, "bias storage does not match heads x N x N");
}

std::vector<float> build_head_bias(const MaskSpec& mask, RelKind rel, std::size_t n, std::size_t head,
                                   std::size_t head_count, std::optional<GridShape> grid) {
  if (n == 0) fail(ErrorKind::InvalidInput, "bias size must be positive");
  if (head >= head_count) fail(ErrorKind::Config, "head index out of range");
  if (mask.kind == MaskKind::Padding && mask.padding.size() != n) {
    fail(ErrorKind::Config, "padding mask needs one flag per position");
  }
  if (rel == RelKind::Axial2d && (!grid || grid->cells() != n)) {
    fail(ErrorKind::Config, "axial-2d bias needs a grid covering all " + std::to_string(n) + " positions");
  }
  const double slope = alibi_slope(head, head_count);
  std::vector<float> out(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double r = 0.0;
      if (rel == RelKind::Alibi) {
        r = -slope * double(distance(i, j));
      } else if (rel == RelKind::Axial2d) {
        r = -slope * double(distance(i / grid->width, j / grid->width)) -
            slope * double(distance(i % grid->width, j % grid->width));
      }
      bool masked = false;
      if (mask.kind == MaskKind::Causal) masked = j > i;
      if (mask.kind == MaskKind::Padding) masked = mask.padding[j];
      out[i * n + j] = masked ? kMasked : static_cast<float>(r);
    }
  }
  return out;
}

AttentionBias build_bias(const MaskSpec& mask, RelKind rel, std::size_t n, std::size_t head_count,
                         std::optional<GridShape> grid) {
  if (head_count == 0) fail(ErrorKind::Config, "head count must be positive");
  std::vector<float> values;
  values.reserve(head_count * n * n);
  for (std::size_t h = 0; h < head_count; ++h) {
    auto head = build_head_bias(mask, rel, n, h, head_count, grid);
    values.insert(values.end(), head.begin(), head.end());
  }
  return AttentionBias(n, head_count, mask.kind, rel, std::move(values));
}

void AttentionParams::validate(std::size_t model_dim) const {
  if (!w_q.defined() || !w_k.defined() || !w_v.defined()) fail(ErrorKind::Config, "attention projections missing");
  if (head_count == 0) fail(ErrorKind::Config, "head count must be positive");
  if (w_q.rank() != 2 || w_k.rank() != 2 || w_v.rank() != 2 || w_q.dim(0) != model_dim || w_k.dim(0) != model_dim ||
      w_v.dim(0) != model_dim) {
    fail(ErrorKind::Dimension, "attention projections must have " + std::to_string(model_dim) + " input rows");
  }
  if (w_q.shape() != w_k.shape()) fail(ErrorKind::Dimension, "query and key projections differ in shape");
  if (w_q.dim(1) % head_count != 0 || w_v.dim(1) % head_count != 0) {
    fail(ErrorKind::Dimension, "projection widths must split evenly across heads");
  }
}

Tensor dense_attention(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
                       const AttentionContext& ctx) {
  return attend(x, params, bias, nullptr, ctx);
}

Tensor subsampled_attention(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
                            const WindowedSources& sources, const AttentionContext& ctx) {
  return attend(x, params, bias, &sources, ctx);
}

Tensor unbiased_ssa(const Tensor& x, const AttentionParams& params, const AttentionBias& bias, std::size_t k,
                    RandomSource& rng, const AttentionContext& ctx) {
  batch_of(x, bias);
  const auto sources = unbiased_sources(bias.size(), k, bias.mask_kind() == MaskKind::Causal, rng);
  return subsampled_attention(x, params, bias, sources, ctx);
}

WindowedSources draw_local_sources(std::size_t n, const LocalSsaOptions& options, RandomSource& rng) {
  if (options.grid) {
    if (options.grid->cells() != n) fail(ErrorKind::Config, "grid does not cover the sequence");
    return options.causal ? causal_windowed_sources_2d(*options.grid, options.windows, options.sigma_abs,
                                                       options.sigma_w_abs, rng)
                          : local_windowed_sources_2d(*options.grid, options.windows, options.sigma_abs,
                                                      options.sigma_w_abs, rng);
  }
  return options.causal ? causal_windowed_sources(n, options.windows, options.sigma_abs, rng)
                        : local_windowed_sources(n, options.windows, options.sigma_abs, rng);
}

Tensor locally_biased_ssa(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
                          const LocalSsaOptions& options, RandomSource& rng, const AttentionContext& ctx) {
  batch_of(x, bias);
  const auto sources = draw_local_sources(bias.size(), options, rng);
  return subsampled_attention(x, params, bias, sources, ctx);
}

}  // namespace ssa
