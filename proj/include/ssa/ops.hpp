#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

// Differentiable op vocabulary. All 2-D ops take [rows, cols] tensors.
// Reductions (softmax sums, layer-norm moments, cross-entropy) accumulate in
// double; matmul uses the float32 GEMM kernel of Eigen.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T

Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& x, const Tensor& row);  // x[i,:] + row
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
Tensor sum(const Tensor& x);

enum class MaskedRowPolicy { Throw, ZeroFill };

struct SoftmaxOptions {
  // Optional additive bias with the same [rows, cols] layout as the input.
  // May contain -inf; those entries get zero probability.
  std::span<const float> bias;
  MaskedRowPolicy policy = MaskedRowPolicy::Throw;
  // Incremented once per fully masked row under ZeroFill.
  std::size_t* masked_rows = nullptr;
};

// Row-wise softmax over the last axis of softmax(x + bias), max-subtracted.
// Fully masked rows throw MaskedRowError or become all-zero per policy.
Tensor softmax_rows(const Tensor& x, const SoftmaxOptions& options = {});

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor slice_rows(const Tensor& x, std::size_t offset, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, float eps = 1e-5f);
// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);
Tensor embedding(const Tensor& table, std::span<const std::uint32_t> ids);
// Mean token cross-entropy in nats; logits [n, vocab], one target per row.
Tensor cross_entropy(const Tensor& logits, std::span<const std::uint32_t> targets);

// Ascending order of keys; equal keys keep their original relative order.
std::vector<std::size_t> stable_argsort(std::span<const double> keys);

}  // namespace ssa
