// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "svf/rng.hpp"

namespace svf {

namespace {
thread_local Graph* t_current_graph = nullptr;
}

Index shape_product(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

static std::shared_ptr<TensorNode> make_leaf(std::vector<Index> shape, Array data,
                                             bool requires_grad) {
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_product(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

Tensor Tensor::zeros(std::vector<Index> shape, bool requires_grad) {
  Index n = shape_product(shape);
  return Tensor(make_leaf(std::move(shape), Array::Zero(n), requires_grad));
}

Tensor Tensor::ones(std::vector<Index> shape, bool requires_grad) {
  Index n = shape_product(shape);
  return Tensor(make_leaf(std::move(shape), Array::Ones(n), requires_grad));
}

Tensor Tensor::full(std::vector<Index> shape, double v, bool requires_grad) {
  Index n = shape_product(shape);
  return Tensor(make_leaf(std::move(shape), Array::Constant(n, v), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return full({1}, v, requires_grad);
}

Tensor Tensor::from_flat(std::vector<Index> shape, Array data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_matrix(const MatrixRM& m, bool requires_grad) {
  Array data = Eigen::Map<const Array>(m.data(), m.size());
  return Tensor(make_leaf({m.rows(), m.cols()}, std::move(data), requires_grad));
}

Tensor Tensor::randn(std::vector<Index> shape, Rng& rng, double stddev, bool requires_grad) {
  Index n = shape_product(shape);
  Array data(n);
  for (Index i = 0; i < n; ++i) data[i] = rng.normal() * stddev;
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Index Tensor::rows() const {
  if (rank() == 1) return node_->shape[0];
  if (rank() == 2) return node_->shape[0];
  throw ShapeError("rows() needs rank 1 or 2, shape is " + shape_str(node_->shape));
}

Index Tensor::cols() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return node_->shape[1];
  throw ShapeError("cols() needs rank 1 or 2, shape is " + shape_str(node_->shape));
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a size-1 tensor, shape is " + shape_str(node_->shape));
  return node_->value[0];
}

const Array& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad accessed before any backward pass");
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  node_->grad.setZero();
}

ConstMatMap Tensor::mat() const {
  if (rank() != 2) throw ShapeError("mat() needs rank 2, shape is " + shape_str(node_->shape));
  return ConstMatMap(node_->value.data(), node_->shape[0], node_->shape[1]);
}

MatMap Tensor::mutable_mat() {
  if (rank() != 2) throw ShapeError("mat() needs rank 2, shape is " + shape_str(node_->shape));
  return MatMap(node_->value.data(), node_->shape[0], node_->shape[1]);
}

ConstVecMap Tensor::vec() const {
  return ConstVecMap(node_->value.data(), node_->value.size());
}

Tensor Tensor::detached_copy() const {
  return Tensor(make_leaf(node_->shape, node_->value, false));
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Graph* Graph::current() { return t_current_graph; }

void Graph::append(std::shared_ptr<TensorNode> node) {
  node->graph = this;
  tape_.push_back(std::move(node));
}

std::vector<Tensor> Graph::leaves() const {
  std::vector<Tensor> out;
  std::unordered_set<TensorNode*> seen;
  for (const auto& n : tape_) {
    for (const auto& p : n->parents) {
      if (p->is_leaf() && seen.insert(p.get()).second) out.emplace_back(p);
    }
  }
  return out;
}

void Graph::backward(const Tensor& loss) {
  TensorNode* root = loss.raw();
  if (root == nullptr || root->graph != this) {
    throw ContractError("backward: loss was not recorded in this graph");
  }
  if (root->value.size() != 1) {
    throw ContractError("backward: loss must be scalar, shape is " + shape_str(root->shape));
  }

  // Fresh grads for op nodes; leaf grads persist and accumulate.
  for (const auto& n : tape_) {
    n->ensure_grad();
    n->grad.setZero();
  }

  std::unordered_set<TensorNode*> reachable;
  std::vector<TensorNode*> stack{root};
  reachable.insert(root);
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (p->requires_grad && reachable.insert(p.get()).second) stack.push_back(p.get());
    }
  }

  root->grad[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    TensorNode* n = it->get();
    if (!n->requires_grad || !n->backward) continue;
    if (reachable.find(n) == reachable.end()) continue;
    n->backward(*n);
  }
}

void Graph::replay() {
  for (const auto& n : tape_) {
    if (n->forward) n->forward(*n);
  }
}

Recording::Recording(Graph& g) : prev_(t_current_graph) {
  t_current_graph = &g;
}

Recording::~Recording() {
  t_current_graph = prev_;
}

void backward(const Tensor& loss) {
  TensorNode* n = loss.raw();
  if (n == nullptr || n->graph == nullptr) {
    throw ContractError("backward: loss is not part of a recorded graph");
  }
  n->graph->backward(loss);
}

namespace detail {

Tensor make_op(std::vector<Index> shape,
               std::vector<std::shared_ptr<TensorNode>> parents,
               std::function<void(TensorNode&)> forward,
               std::function<void(TensorNode&)> backward) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = Array(shape_product(node->shape));
  node->parents = std::move(parents);
  forward(*node);

  Graph* g = Graph::current();
  if (g == nullptr) {
    // Eval path: value only, release the graph structure.
    node->parents.clear();
    return Tensor(std::move(node));
  }
  bool any_grad = false;
  for (const auto& p : node->parents) any_grad = any_grad || p->requires_grad;
  node->requires_grad = any_grad;
  node->forward = std::move(forward);
  if (any_grad) node->backward = std::move(backward);
  g->append(node);
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace svf
