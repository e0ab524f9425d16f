#include "ssa/model.hpp"

#include <cmath>
#include <regex>

#include "ssa/error.hpp"
#include "ssa/ops.hpp"

namespace ssa {

namespace {

Tensor normal_param(Shape shape, double stddev, RandomSource& rng) {
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<float>(stddev * rng.normal());
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor const_param(Shape shape, float value) { return Tensor::full(std::move(shape), value, true); }

std::string layer_prefix(std::size_t layer) { return "layers." + std::to_string(layer) + "."; }

}  // namespace

void ModelConfig::validate() const {
  if (layer_count == 0 || model_dim == 0 || head_count == 0 || ff_dim == 0 || vocab_size == 0 || max_len == 0) {
    fail(ErrorKind::Config, "model dimensions must all be positive");
  }
  if (model_dim % head_count != 0) {
    fail(ErrorKind::Config, "head count " + std::to_string(head_count) + " does not divide model_dim " +
                                std::to_string(model_dim));
  }
  if (mask_kind == MaskKind::Padding) fail(ErrorKind::Config, "the language model uses causal or no masking");
  if (rel_kind == RelKind::Axial2d && !grid) fail(ErrorKind::Config, "axial-2d positions need model.grid");
  if (grid && grid->cells() != max_len) fail(ErrorKind::Config, "grid cells must equal max_len");
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.model_dim, f = c.ff_dim, v = c.vocab_size;
  return v * d + c.layer_count * (4 * d * d + 2 * d * f + f + d + 4 * d) + 2 * d + d * v;
}

std::size_t SsaPlan::covered_layers() const {
  std::size_t count = 0;
  for (const auto& l : layers) count += l.kind != LayerPlan::Kind::Dense;
  return count;
}

SigmaSchedule sigma_preset(const std::string& name) {
  if (name == "word" || name == "wikitext") return {0.2, 0.35};
  if (name == "char" || name == "enwik8") return {0.1, 0.225};
  fail(ErrorKind::Config, "unknown sigma preset '" + name + "'");
}

double sigma_schedule(std::size_t layer_index, double sigma_start, double sigma_end, std::size_t layer_count) {
  if (layer_count <= 1) return sigma_start;
  return sigma_start + (sigma_end - sigma_start) * double(layer_index - 1) / double(layer_count - 1);
}

std::size_t keep_count(double drop_percent, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::llround(double(n) * (1.0 - drop_percent / 100.0)));
  return std::clamp<std::size_t>(k, 1, n);
}

SsaPlan parse_plan(const std::string& tag, std::size_t layer_count, SigmaSchedule sigma, bool causal) {
  static const std::regex grammar(R"(S(\d+)(?:-(L)(\d+)|-(U)(\d+(?:\.\d+)?))?)");
  std::smatch m;
  if (!std::regex_match(tag, m, grammar)) {
    fail(ErrorKind::Parse, "malformed plan tag '" + tag + "' (expected S<l>, S<l>-L<w> or S<l>-U<x>)");
  }
  const std::size_t covered = std::stoul(m[1].str());
  if (covered > layer_count) {
    fail(ErrorKind::Parse, "plan tag '" + tag + "' covers " + std::to_string(covered) + " layers but the model has " +
                               std::to_string(layer_count));
  }
  const bool local = m[2].matched;
  const bool unbiased = m[4].matched;
  if (covered > 0 && !local && !unbiased) {
    fail(ErrorKind::Parse, "plan tag '" + tag + "' names SSA layers without -L<w> or -U<x>");
  }
  SsaPlan plan;
  plan.tag = tag;
  plan.causal = causal;
  plan.layers.assign(layer_count, LayerPlan{});
  for (std::size_t layer = layer_count - covered; layer < layer_count; ++layer) {
    auto& entry = plan.layers[layer];
    if (local) {
      entry.kind = LayerPlan::Kind::Local;
      entry.windows = std::stoul(m[3].str());
      if (entry.windows == 0) fail(ErrorKind::Parse, "plan tag '" + tag + "' has zero windows");
      entry.sigma_frac = sigma_schedule(layer + 1, sigma.start, sigma.end, layer_count);
      if (entry.sigma_frac < 0.0) fail(ErrorKind::Parse, "sigma schedule yields a negative sigma");
    } else {
      entry.kind = LayerPlan::Kind::Unbiased;
      entry.drop_percent = std::stod(m[5].str());
      if (entry.drop_percent >= 100.0) fail(ErrorKind::Parse, "plan tag '" + tag + "' drops 100% or more");
    }
  }
  return plan;
}

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  RandomSource rng(init_seed);
  const std::size_t d = config_.model_dim, f = config_.ff_dim, v = config_.vocab_size;
  const double residual = 1.0 / std::sqrt(2.0 * double(config_.layer_count));
  embed_ = normal_param({v, d}, 1.0, rng);
  for (std::size_t l = 0; l < config_.layer_count; ++l) {
    BlockParams b;
    b.norm1_gain = const_param({d}, 1.0f);
    b.norm1_shift = const_param({d}, 0.0f);
    b.w_q = normal_param({d, d}, 1.0 / std::sqrt(double(d)), rng);
    b.w_k = normal_param({d, d}, 1.0 / std::sqrt(double(d)), rng);
    b.w_v = normal_param({d, d}, 1.0 / std::sqrt(double(d)), rng);
    b.w_o = normal_param({d, d}, residual / std::sqrt(double(d)), rng);
    b.norm2_gain = const_param({d}, 1.0f);
    b.norm2_shift = const_param({d}, 0.0f);
    b.ff_in = normal_param({d, f}, 1.0 / std::sqrt(double(d)), rng);
    b.ff_in_bias = const_param({f}, 0.0f);
    b.ff_out = normal_param({f, d}, residual / std::sqrt(double(f)), rng);
    b.ff_out_bias = const_param({d}, 0.0f);
    blocks_.push_back(std::move(b));
  }
  final_gain_ = const_param({d}, 1.0f);
  final_shift_ = const_param({d}, 0.0f);
  head_ = normal_param({d, v}, 0.1 / std::sqrt(double(d)), rng);
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out{{"embed.weight", embed_}};
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const auto p = layer_prefix(l);
    out.push_back({p + "norm1.gain", b.norm1_gain});
    out.push_back({p + "norm1.shift", b.norm1_shift});
    out.push_back({p + "attn.w_q", b.w_q});
    out.push_back({p + "attn.w_k", b.w_k});
    out.push_back({p + "attn.w_v", b.w_v});
    out.push_back({p + "attn.w_o", b.w_o});
    out.push_back({p + "norm2.gain", b.norm2_gain});
    out.push_back({p + "norm2.shift", b.norm2_shift});
    out.push_back({p + "ff.w_in", b.ff_in});
    out.push_back({p + "ff.b_in", b.ff_in_bias});
    out.push_back({p + "ff.w_out", b.ff_out});
    out.push_back({p + "ff.b_out", b.ff_out_bias});
  }
  out.push_back({"final_norm.gain", final_gain_});
  out.push_back({"final_norm.shift", final_shift_});
  out.push_back({"head.weight", head_});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

const AttentionBias& Model::bias_for(std::size_t n) const {
  std::lock_guard lock(bias_mutex_);
  auto it = bias_cache_.find(n);
  if (it == bias_cache_.end()) {
    std::optional<GridShape> grid;
    if (config_.grid && config_.grid->cells() == n) grid = config_.grid;
    if (config_.rel_kind == RelKind::Axial2d && !grid) {
      fail(ErrorKind::InvalidInput, "grid models only accept full-grid sequences of length " +
                                        std::to_string(config_.max_len));
    }
    it = bias_cache_.emplace(n, build_bias({config_.mask_kind, {}}, config_.rel_kind, n, config_.head_count, grid))
             .first;
  }
  return it->second;
}

Tensor Model::attention(std::size_t layer, const Tensor& h, const LayerPlan& plan, ForwardMode mode, bool causal,
                        std::size_t seq_len, RandomSource& rng, const AttentionContext& ctx) const {
  const auto& b = blocks_[layer];
  const AttentionParams params{b.w_q, b.w_k, b.w_v, config_.head_count};
  const auto& bias = bias_for(seq_len);
  if (mode == ForwardMode::Dense || plan.kind == LayerPlan::Kind::Dense) return dense_attention(h, params, bias, ctx);
  if (plan.kind == LayerPlan::Kind::Unbiased) {
    return unbiased_ssa(h, params, bias, keep_count(plan.drop_percent, seq_len), rng, ctx);
  }
  LocalSsaOptions local;
  local.windows = plan.windows;
  local.causal = causal;
  if (config_.grid && config_.grid->cells() == seq_len) {
    local.grid = config_.grid;
    local.sigma_abs = plan.sigma_frac * double(config_.grid->height);
    local.sigma_w_abs = plan.sigma_frac * double(config_.grid->width);
  } else {
    local.sigma_abs = plan.sigma_frac * double(seq_len);
  }
  return locally_biased_ssa(h, params, bias, local, rng, ctx);
}

Tensor Model::forward(std::span<const std::uint32_t> tokens, std::size_t batch, const SsaPlan& plan,
                      ForwardMode mode, RandomSource& rng, const ForwardOptions& options) const {
  if (batch == 0 || tokens.empty() || tokens.size() % batch != 0) {
    fail(ErrorKind::InvalidInput, "token buffer of " + std::to_string(tokens.size()) + " does not split into " +
                                      std::to_string(batch) + " sequences");
  }
  const std::size_t seq_len = tokens.size() / batch;
  if (seq_len > config_.max_len) {
    fail(ErrorKind::InvalidInput, "sequence length " + std::to_string(seq_len) + " exceeds max_len " +
                                      std::to_string(config_.max_len));
  }
  if (mode == ForwardMode::TrainSsa && plan.layers.size() != config_.layer_count) {
    fail(ErrorKind::Config, "plan '" + plan.tag + "' has " + std::to_string(plan.layers.size()) +
                                " layers, model has " + std::to_string(config_.layer_count));
  }
  const bool causal = config_.mask_kind == MaskKind::Causal;
  if (mode == ForwardMode::TrainSsa && plan.causal != causal) {
    fail(ErrorKind::Config, "plan '" + plan.tag + "' causality does not match the model mask");
  }
  const AttentionContext ctx{options.policy, options.stats};
  Tensor x = embedding(embed_, tokens);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const LayerPlan layer_plan = mode == ForwardMode::TrainSsa ? plan.layers[l] : LayerPlan{};
    Tensor attn;
    try {
      attn = attention(l, layer_norm(x, b.norm1_gain, b.norm1_shift), layer_plan, mode, causal, seq_len, rng,
                       ctx);
    } catch (const MaskedRowError& e) {
      throw MaskedRowError(e.row(), e.window(), l);
    } catch (const Error& e) {
      throw Error(e.kind(), "layer " + std::to_string(l) + ": " + e.what());
    }
    x = add(x, matmul(attn, b.w_o));
    Tensor hidden = gelu(add_row(matmul(layer_norm(x, b.norm2_gain, b.norm2_shift), b.ff_in), b.ff_in_bias));
    x = add(x, add_row(matmul(hidden, b.ff_out), b.ff_out_bias));
  }
  return matmul(layer_norm(x, final_gain_, final_shift_), head_);
}

}  // namespace ssa
