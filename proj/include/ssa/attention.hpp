#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssa/ops.hpp"
#include "ssa/random.hpp"
#include "ssa/sampling.hpp"
#include "ssa/tensor.hpp"

namespace ssa {

enum class MaskKind { None, Causal, Padding };
enum class RelKind { None, Alibi, Axial2d };

std::string mask_kind_name(MaskKind kind);
std::string rel_kind_name(RelKind kind);
MaskKind parse_mask_kind(const std::string& name);
RelKind parse_rel_kind(const std::string& name);

struct MaskSpec {
  MaskKind kind = MaskKind::None;
  // Padding only: padding[j] == true removes source j from every row.
  std::vector<bool> padding;
};

// ALiBi slope of head h (0-based): 2^(-8 (h+1) / H).
double alibi_slope(std::size_t head, std::size_t head_count);

// Additive pre-softmax bias B = M + R, one N x N matrix per head, stored
// head-major. Masked entries are -inf; all others are finite.
class AttentionBias {
 public:
  AttentionBias() = default;
  AttentionBias(std::size_t n, std::size_t heads, MaskKind mask, RelKind rel, std::vector<float> values);

  std::size_t size() const { return n_; }
  std::size_t heads() const { return heads_; }
  MaskKind mask_kind() const { return mask_; }
  RelKind rel_kind() const { return rel_; }
  float at(std::size_t head, std::size_t target, std::size_t source) const {
    return values_[(head * n_ + target) * n_ + source];
  }
  std::span<const float> head(std::size_t h) const {
    return std::span<const float>(values_).subspan(h * n_ * n_, n_ * n_);
  }

 private:
  std::size_t n_ = 0;
  std::size_t heads_ = 0;
  MaskKind mask_ = MaskKind::None;
  RelKind rel_ = RelKind::None;
  std::vector<float> values_;
};

// Single-head bias matrix (N x N, row-major).
std::vector<float> build_head_bias(const MaskSpec& mask, RelKind rel, std::size_t n, std::size_t head,
                                   std::size_t head_count, std::optional<GridShape> grid = std::nullopt);

AttentionBias build_bias(const MaskSpec& mask, RelKind rel, std::size_t n, std::size_t head_count,
                         std::optional<GridShape> grid = std::nullopt);

// Projections for all heads side by side: head h owns columns
// [h*d_k, (h+1)*d_k) of w_q and w_k and [h*d_v, (h+1)*d_v) of w_v.
struct AttentionParams {
  Tensor w_q;  // d x H*d_k
  Tensor w_k;  // d x H*d_k
  Tensor w_v;  // d x H*d_v
  std::size_t head_count = 1;

  std::size_t key_dim() const { return w_q.dim(1) / head_count; }
  std::size_t value_dim() const { return w_v.dim(1) / head_count; }
  void validate(std::size_t model_dim) const;
};

struct AttentionStats {
  std::uint64_t score_macs = 0;  // multiply-accumulates in Q K^T
  std::uint64_t value_macs = 0;  // multiply-accumulates in A V
  std::size_t masked_rows = 0;   // rows zero-filled under ZeroFill
};

struct AttentionContext {
  MaskedRowPolicy policy = MaskedRowPolicy::Throw;
  AttentionStats* stats = nullptr;
};

// Inputs are [B*N, d] with N = bias.size(): B sequences stacked row-wise.
// Every sequence and every head shares the same source selection.
// Outputs are [B*N, H*d_v], rows in original target order.

Tensor dense_attention(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
                       const AttentionContext& ctx = {});

// Attention over realized source sets; the kernel shared by both SSA forms.
Tensor subsampled_attention(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
                            const WindowedSources& sources, const AttentionContext& ctx = {});

// Uniform subsampling of k sources. Index 0 is forced in when the bias is causal.
Tensor unbiased_ssa(const Tensor& x, const AttentionParams& params, const AttentionBias& bias, std::size_t k,
                    RandomSource& rng, const AttentionContext& ctx = {});

struct LocalSsaOptions {
  std::size_t windows = 1;
  double sigma_abs = 0.0;  // sequence axis, or grid rows when `grid` is set
  bool causal = false;
  std::optional<GridShape> grid;
  double sigma_w_abs = 0.0;  // grid columns
};

WindowedSources draw_local_sources(std::size_t n, const LocalSsaOptions& options, RandomSource& rng);

Tensor locally_biased_ssa(const Tensor& x, const AttentionParams& params, const AttentionBias& bias,
                          const LocalSsaOptions& options, RandomSource& rng, const AttentionContext& ctx = {});

}  // namespace ssa
