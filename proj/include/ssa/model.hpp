#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssa/attention.hpp"
#include "ssa/random.hpp"
#include "ssa/tensor.hpp"

namespace ssa {

struct ModelConfig {
  std::size_t layer_count = 4;
  std::size_t model_dim = 128;
  std::size_t head_count = 4;
  std::size_t ff_dim = 512;
  std::size_t vocab_size = 256;
  std::size_t max_len = 512;
  MaskKind mask_kind = MaskKind::Causal;
  RelKind rel_kind = RelKind::Alibi;
  std::optional<GridShape> grid;  // sequences are row-major grids when set

  std::size_t head_dim() const { return model_dim / head_count; }
  void validate() const;
};

// Closed form for the tensors Model allocates:
//   V*d (embedding) + L*(4 d^2 + 2 d f + f + d + 4 d) + 2 d + d*V (output head)
// with d = model_dim, f = ff_dim, V = vocab_size. The 4 d per layer are the
// two layer-norm gain/shift pairs; f + d the feed-forward biases.
std::size_t parameter_count(const ModelConfig& config);

struct LayerPlan {
  enum class Kind { Dense, Unbiased, Local };
  Kind kind = Kind::Dense;
  double drop_percent = 0.0;  // Unbiased
  std::size_t windows = 1;    // Local
  double sigma_frac = 0.0;    // Local, relative to the sequence length

  friend bool operator==(const LayerPlan&, const LayerPlan&) = default;
};

// Per-layer attention plan named S<l>[-L<w>|-U<x>]: SSA on the last l layers,
// locally biased with w windows or unbiased dropping x% of sources.
struct SsaPlan {
  std::string tag = "S0";
  std::vector<LayerPlan> layers;
  bool causal = true;

  std::size_t covered_layers() const;
  bool is_dense() const { return covered_layers() == 0; }
};

struct SigmaSchedule {
  double start = 0.2;
  double end = 0.35;
};

// Word-level preset (0.2 -> 0.35) and character-level preset (0.1 -> 0.225).
SigmaSchedule sigma_preset(const std::string& name);

// Linear ramp over 1-based layer index i of L layers; constant when L == 1.
double sigma_schedule(std::size_t layer_index, double sigma_start, double sigma_end, std::size_t layer_count);

SsaPlan parse_plan(const std::string& tag, std::size_t layer_count, SigmaSchedule sigma = {}, bool causal = true);

// Sources kept by unbiased SSA: round(n * (1 - drop/100)), at least 1.
std::size_t keep_count(double drop_percent, std::size_t n);

enum class ForwardMode { TrainSsa, Dense };

struct ForwardOptions {
  MaskedRowPolicy policy = MaskedRowPolicy::Throw;
  AttentionStats* stats = nullptr;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct BlockParams {
  Tensor norm1_gain, norm1_shift;
  Tensor w_q, w_k, w_v, w_o;
  Tensor norm2_gain, norm2_shift;
  Tensor ff_in, ff_in_bias, ff_out, ff_out_bias;
};

// Decoder-only pre-norm transformer: embedding, L blocks of
// (norm -> attention -> residual, norm -> GELU feed-forward -> residual),
// final norm, untied output projection. Positions enter only via the
// attention bias.
//
// Initialization, from a dedicated RandomSource(seed): weight matrices are
// N(0, 1/fan_in); the residual-branch outputs (w_o, ff_out) are further
// scaled by 1/sqrt(2L); the output head uses N(0, 0.01/d) so initial logits
// are nearly uniform; embeddings are N(0, 1); gains 1, shifts and biases 0.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;

  // tokens holds `batch` sequences of equal length N back to back.
  // Returns logits [batch*N, vocab]. In Dense mode the plan is ignored.
  Tensor forward(std::span<const std::uint32_t> tokens, std::size_t batch, const SsaPlan& plan, ForwardMode mode,
                 RandomSource& rng, const ForwardOptions& options = {}) const;

  void zero_grad();

  const AttentionBias& bias_for(std::size_t n) const;

 private:
  Tensor attention(std::size_t layer, const Tensor& h, const LayerPlan& plan, ForwardMode mode, bool causal,
                   std::size_t seq_len, RandomSource& rng, const AttentionContext& ctx) const;

  ModelConfig config_;
  Tensor embed_;
  std::vector<BlockParams> blocks_;
  Tensor final_gain_, final_shift_;
  Tensor head_;

  mutable std::mutex bias_mutex_;
  mutable std::map<std::size_t, AttentionBias> bias_cache_;
};

}  // namespace ssa
