#include "ssa/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "ssa/error.hpp"

namespace ssa {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::MaskedRow: return "masked-row";
    case ErrorKind::Divisibility: return "divisibility";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Compatibility: return "compatibility";
    case ErrorKind::Comparability: return "comparability";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

namespace {

std::string masked_row_message(std::size_t row, std::size_t window, std::size_t layer) {
  std::ostringstream os;
  os << "attention row " << row << " has no unmasked source";
  if (window != MaskedRowError::npos) os << " (window " << window << ")";
  if (layer != MaskedRowError::npos) os << " in layer " << layer;
  return os.str();
}

thread_local bool g_grad_enabled = true;

}  // namespace

MaskedRowError::MaskedRowError(std::size_t row, std::size_t window, std::size_t layer)
    : Error(ErrorKind::MaskedRow, masked_row_message(row, window, layer)),
      row_(row),
      window_(window),
      layer_(layer) {}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<float>& detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) fail(ErrorKind::Dimension, "tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    fail(ErrorKind::Dimension, "shape " + shape_string(shape) + " does not hold " +
                                   std::to_string(data.size()) + " values");
  }
  for (float v : data) {
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, "tensor data must be finite");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    fail(ErrorKind::Dimension, "axis " + std::to_string(axis) + " out of range for " + shape_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const float> Tensor::data() const { return node_->value; }

std::span<float> Tensor::mutable_data() {
  if (!node_->is_leaf()) fail(ErrorKind::Contract, "only leaf tensors may be written in place");
  return node_->value;
}

float Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::Contract, "item() needs a single-element tensor, got " + shape_string(shape()));
  return node_->value[0];
}

float Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= shape()[0] || col >= shape()[1]) {
    fail(ErrorKind::Dimension, "at(" + std::to_string(row) + "," + std::to_string(col) + ") on " + shape_string(shape()));
  }
  return node_->value[row * shape()[1] + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) fail(ErrorKind::Contract, "tensor has no gradient");
  return node_->grad;
}

std::span<float> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0f); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorKind::Contract, "backward() needs a scalar loss");
  }
  auto* root = loss.node().get();
  if (!root->requires_grad) fail(ErrorKind::Contract, "loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS; reversed, it is a valid topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0f);
  }
  root->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace ssa
