#include "ssa/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssa/error.hpp"

namespace ssa {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Map view(std::vector<float>& v, std::size_t rows, std::size_t cols) {
  return Map(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    fail(ErrorKind::Dimension, std::string(op) + ": expected a 2-D tensor, got " +
                                   (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::Dimension, std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                   shape_string(b.shape()));
  }
}

// Wraps a freshly computed value as an op output, recording the backward
// closure only when some parent participates in differentiation.
Tensor make_result(Shape shape, std::vector<float> value, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn, const char* op) {
  for (float v : value) {
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, std::string(op) + ": produced a non-finite value");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorKind::Dimension, "matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()));
  }
  std::vector<float> out(m * n);
  view(out, m, n).noalias() = view(a.node()->value, m, k) * view(b.node()->value, k, n);
  return make_result({m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       auto g = view(self.grad, m, n);
                       if (pa.requires_grad) {
                         view(pa.ensure_grad(), m, k).noalias() += g * view(pb.value, k, n).transpose();
                       }
                       if (pb.requires_grad) {
                         view(pb.ensure_grad(), k, n).noalias() += view(pa.value, m, k).transpose() * g;
                       }
                     },
                     "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    fail(ErrorKind::Dimension, "matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()) + "^T");
  }
  std::vector<float> out(m * n);
  view(out, m, n).noalias() = view(a.node()->value, m, k) * view(b.node()->value, n, k).transpose();
  return make_result({m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       auto g = view(self.grad, m, n);
                       if (pa.requires_grad) view(pa.ensure_grad(), m, k).noalias() += g * view(pb.value, n, k);
                       if (pb.requires_grad) {
                         view(pb.ensure_grad(), n, k).noalias() += g.transpose() * view(pa.value, m, k);
                       }
                     },
                     "matmul_nt");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [](Node& self) {
                       for (auto& p : self.parents) {
                         if (!p->requires_grad) continue;
                         auto& g = p->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       }
                     },
                     "add");
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_matrix(x, "add_row");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (row.numel() != cols) {
    fail(ErrorKind::Dimension, "add_row: row of " + std::to_string(row.numel()) + " values for " +
                                   std::to_string(cols) + " columns");
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  const auto& rv = row.node()->value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += rv[j];
  return make_result(x.shape(), std::move(out), {x.node(), row.node()},
                     [rows, cols](Node& self) {
                       auto& px = *self.parents[0];
                       auto& pr = *self.parents[1];
                       if (px.requires_grad) {
                         auto& g = px.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       }
                       if (pr.requires_grad) {
                         auto& g = pr.ensure_grad();
                         for (std::size_t j = 0; j < cols; ++j) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < rows; ++i) acc += self.grad[i * cols + j];
                           g[j] += static_cast<float>(acc);
                         }
                       }
                     },
                     "add_row");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
                       }
                     },
                     "mul");
}

Tensor scale(const Tensor& x, float factor) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x.node()},
                     [factor](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
                     },
                     "scale");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return make_result({}, {static_cast<float>(acc)}, {x.node()},
                     [](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (auto& v : g) v += self.grad[0];
                     },
                     "sum");
}

Tensor softmax_rows(const Tensor& x, const SoftmaxOptions& options) {
  if (!x.defined() || x.rank() == 0) fail(ErrorKind::Dimension, "softmax_rows: needs at least one axis");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  const bool has_bias = !options.bias.empty();
  if (has_bias && options.bias.size() != x.numel()) {
    fail(ErrorKind::Dimension, "softmax_rows: bias holds " + std::to_string(options.bias.size()) +
                                   " values for input " + shape_string(x.shape()));
  }
  const auto& xv = x.node()->value;
  std::vector<float> out(x.numel(), 0.0f);
  std::vector<double> logits(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * cols;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      double z = xv[base + c];
      if (has_bias) z += options.bias[base + c];
      logits[c] = z;
      peak = std::max(peak, z);
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
      if (options.policy == MaskedRowPolicy::Throw) throw MaskedRowError(r);
      if (options.masked_rows) ++*options.masked_rows;
      continue;  // row stays zero
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      logits[c] = std::exp(logits[c] - peak);
      total += logits[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[base + c] = static_cast<float>(logits[c] / total);
  }
  return make_result(x.shape(), std::move(out), {x.node()},
                     [rows, cols](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       const auto& y = self.value;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t base = r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += double(self.grad[base + c]) * y[base + c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[base + c] += static_cast<float>(y[base + c] * (self.grad[base + c] - dot));
                         }
                       }
                     },
                     "softmax_rows");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_matrix(x, "gather_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (indices.empty()) fail(ErrorKind::InvalidInput, "gather_rows: empty index list");
  std::vector<float> out(indices.size() * cols);
  const auto& xv = x.node()->value;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      fail(ErrorKind::InvalidInput, "gather_rows: index " + std::to_string(indices[i]) + " out of range " +
                                        std::to_string(rows));
    }
    std::copy_n(xv.begin() + indices[i] * cols, cols, out.begin() + i * cols);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result({indices.size(), cols}, std::move(out), {x.node()},
                     [idx = std::move(idx), cols](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t c = 0; c < cols; ++c) g[idx[i] * cols + c] += self.grad[i * cols + c];
                     },
                     "gather_rows");
}

Tensor slice_rows(const Tensor& x, std::size_t offset, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (count == 0 || offset + count > x.dim(0)) fail(ErrorKind::Dimension, "slice_rows: range out of bounds");
  const std::size_t cols = x.dim(1);
  const auto& xv = x.node()->value;
  std::vector<float> out(xv.begin() + offset * cols, xv.begin() + (offset + count) * cols);
  return make_result({count, cols}, std::move(out), {x.node()},
                     [offset, cols](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset * cols + i] += self.grad[i];
                     },
                     "slice_rows");
}

Tensor slice_cols(const Tensor& x, std::size_t offset, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (count == 0 || offset + count > cols) fail(ErrorKind::Dimension, "slice_cols: range out of bounds");
  const auto& xv = x.node()->value;
  std::vector<float> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.begin() + r * cols + offset, count, out.begin() + r * count);
  return make_result({rows, count}, std::move(out), {x.node()},
                     [rows, cols, offset, count](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < count; ++c) g[r * cols + offset + c] += self.grad[r * count + c];
                     },
                     "slice_cols");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::InvalidInput, "concat_rows: nothing to concatenate");
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.dim(1) != cols) fail(ErrorKind::Dimension, "concat_rows: column counts differ");
    rows += p.dim(0);
    parents.push_back(p.node());
  }
  std::vector<float> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({rows, cols}, std::move(out), std::move(parents),
                     [](Node& self) {
                       std::size_t offset = 0;
                       for (auto& p : self.parents) {
                         if (p->requires_grad) {
                           auto& g = p->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
                         }
                         offset += p->value.size();
                       }
                     },
                     "concat_rows");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::InvalidInput, "concat_cols: nothing to concatenate");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.dim(0) != rows) fail(ErrorKind::Dimension, "concat_cols: row counts differ");
    cols += p.dim(1);
    parents.push_back(p.node());
  }
  std::vector<float> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().begin() + r * w, w, out.begin() + r * cols + offset);
    offset += w;
  }
  return make_result({rows, cols}, std::move(out), std::move(parents),
                     [rows, cols](Node& self) {
                       std::size_t offset = 0;
                       for (auto& p : self.parents) {
                         const std::size_t w = p->shape[1];
                         if (p->requires_grad) {
                           auto& g = p->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * cols + offset + c];
                         }
                         offset += w;
                       }
                     },
                     "concat_cols");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, float eps) {
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (gain.numel() != cols || shift.numel() != cols) fail(ErrorKind::Dimension, "layer_norm: affine size mismatch");
  const auto& xv = x.node()->value;
  const auto& gv = gain.node()->value;
  const auto& bv = shift.node()->value;
  std::vector<float> out(rows * cols);
  // Saved per-row statistics: normalized values and inverse std.
  std::vector<float> normalized(rows * cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = xv.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= double(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= double(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double z = (row[c] - mean) * inv_std[r];
      normalized[r * cols + c] = static_cast<float>(z);
      out[r * cols + c] = static_cast<float>(z * gv[c] + bv[c]);
    }
  }
  return make_result(x.shape(), std::move(out), {x.node(), gain.node(), shift.node()},
                     [rows, cols, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                       auto& px = *self.parents[0];
                       auto& pg = *self.parents[1];
                       auto& pb = *self.parents[2];
                       const auto& gv = pg.value;
                       if (pg.requires_grad || pb.requires_grad) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           double dg = 0.0, db = 0.0;
                           for (std::size_t r = 0; r < rows; ++r) {
                             dg += double(self.grad[r * cols + c]) * normalized[r * cols + c];
                             db += self.grad[r * cols + c];
                           }
                           if (pg.requires_grad) pg.ensure_grad()[c] += static_cast<float>(dg);
                           if (pb.requires_grad) pb.ensure_grad()[c] += static_cast<float>(db);
                         }
                       }
                       if (!px.requires_grad) return;
                       auto& gx = px.ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         double mean_dz = 0.0, mean_dz_z = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double dz = double(self.grad[r * cols + c]) * gv[c];
                           mean_dz += dz;
                           mean_dz_z += dz * normalized[r * cols + c];
                         }
                         mean_dz /= double(cols);
                         mean_dz_z /= double(cols);
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double dz = double(self.grad[r * cols + c]) * gv[c];
                           gx[r * cols + c] += static_cast<float>(
                               inv_std[r] * (dz - mean_dz - normalized[r * cols + c] * mean_dz_z));
                         }
                       }
                     },
                     "layer_norm");
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  const auto& xv = x.node()->value;
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
  }
  return make_result(x.shape(), std::move(out), {x.node()},
                     [](Node& self) {
                       auto& px = *self.parents[0];
                       auto& g = px.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double v = px.value[i];
                         const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                         const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                         g[i] += static_cast<float>(self.grad[i] * (cdf + v * pdf));
                       }
                     },
                     "gelu");
}

Tensor embedding(const Tensor& table, std::span<const std::uint32_t> ids) {
  require_matrix(table, "embedding");
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (auto id : rows) {
    if (id >= table.dim(0)) {
      fail(ErrorKind::InvalidInput, "embedding: token id " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(table.dim(0)));
    }
  }
  return gather_rows(table, rows);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::uint32_t> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (targets.size() != rows) fail(ErrorKind::Dimension, "cross_entropy: one target per row required");
  const auto& lv = logits.node()->value;
  // Softmax probabilities are kept for the backward pass.
  std::vector<float> probs(rows * cols);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) fail(ErrorKind::InvalidInput, "cross_entropy: target outside vocabulary");
    const float* row = lv.data() + r * cols;
    double peak = row[0];
    for (std::size_t c = 1; c < cols; ++c) peak = std::max(peak, double(row[c]));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - peak);
    const double log_z = peak + std::log(z);
    total += log_z - row[targets[r]];
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = static_cast<float>(std::exp(row[c] - log_z));
  }
  std::vector<std::uint32_t> tgt(targets.begin(), targets.end());
  return make_result({}, {static_cast<float>(total / double(rows))}, {logits.node()},
                     [rows, cols, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       const double s = double(self.grad[0]) / double(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double p = probs[r * cols + c] - (c == tgt[r] ? 1.0 : 0.0);
                           g[r * cols + c] += static_cast<float>(s * p);
                         }
                       }
                     },
                     "cross_entropy");
}

std::vector<std::size_t> stable_argsort(std::span<const double> keys) {
  for (double k : keys) {
    if (!std::isfinite(k)) fail(ErrorKind::InvalidInput, "stable_argsort: keys must be finite");
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return order;
}

}  // namespace ssa
