#include "ssa/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "ssa/error.hpp"

namespace ssa {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) fail(ErrorKind::Contract, "optimizer parameters must require gradients");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double Adam::step(double lr) {
  double sq = 0.0;
  for (auto& p : params_) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) fail(ErrorKind::Numeric, "non-finite gradient norm");
  const double factor = options_.clip > 0.0 && norm > options_.clip ? options_.clip / norm : 1.0;

  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_));
  const double c2 = 1.0 - std::pow(b2, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = factor * g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      w[j] = static_cast<float>(w[j] - lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps));
    }
  }
  return norm;
}

double learning_rate(std::size_t step, std::size_t total_steps, std::size_t warmup, double lr_peak, double lr_final) {
  if (step < warmup) return lr_peak * double(step + 1) / double(warmup);
  const std::size_t decay_steps = total_steps > warmup + 1 ? total_steps - warmup - 1 : 1;
  const double progress = std::min(1.0, double(step - warmup) / double(decay_steps));
  return lr_final + 0.5 * (lr_peak - lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ssa
