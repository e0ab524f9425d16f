#pragma once

#include <cstddef>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double clip = 1.0;  // global gradient-norm clip; <= 0 disables
};

// Adam with bias correction, applied in place to leaf parameters.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Clips, then steps. Returns the pre-clip global gradient norm.
  double step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Linear warmup from 0 to lr_peak over `warmup` steps, then cosine decay to
// lr_final at the last step. `step` is 0-based.
double learning_rate(std::size_t step, std::size_t total_steps, std::size_t warmup, double lr_peak, double lr_final);

}  // namespace ssa
