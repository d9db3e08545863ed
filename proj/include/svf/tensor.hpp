// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Dense tensors with reverse-mode automatic differentiation.
//
// Storage is a flat row-major Eigen array; rank-2 views are mapped on
// demand. Graphs are recorded per forward pass (define-by-run): while a
// Recording scope is alive on the current thread, every op appends a node
// to its Graph. Without a scope ops compute values only, which is the
// cheap path used for frozen-teacher and eval forwards.
//
// Threading: a Graph and the tensors recorded into it belong to one thread
// for the duration of a forward/backward pass. Distinct graphs may run on
// distinct threads. Leaf tensors can move between threads when no pass
// that uses them is in flight.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "svf/common.hpp"

namespace svf {

class Rng;

using Array = Eigen::ArrayXd;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

class Graph;

struct TensorNode {
  std::vector<Index> shape;
  Array value;
  Array grad;  // empty until first accumulation
  bool requires_grad = false;
  Graph* graph = nullptr;  // owning graph for recorded op nodes, null for leaves
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> forward;   // recompute value from parents
  std::function<void(TensorNode&)> backward;  // scatter grad into parents

  Index size() const { return value.size(); }
  bool is_leaf() const { return parents.empty() && !forward; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
  }
  void accumulate(const Array& g) {
    ensure_grad();
    grad += g;
  }
};

Index shape_product(const std::vector<Index>& shape);
std::string shape_str(const std::vector<Index>& shape);

// Value-semantic handle to a TensorNode.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<Index> shape, bool requires_grad = false);
  static Tensor ones(std::vector<Index> shape, bool requires_grad = false);
  static Tensor full(std::vector<Index> shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_flat(std::vector<Index> shape, Array data, bool requires_grad = false);
  static Tensor from_matrix(const MatrixRM& m, bool requires_grad = false);
  // Gaussian init scaled by stddev.
  static Tensor randn(std::vector<Index> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }
  const std::vector<Index>& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }
  Index rows() const;
  Index cols() const;

  const Array& value() const { return node_->value; }
  Array& mutable_value() { return node_->value; }
  double item() const;

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Array& grad() const;
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Rank-2 matrix view over the flat storage.
  ConstMatMap mat() const;
  MatMap mutable_mat();
  ConstVecMap vec() const;

  // Leaf copy sharing no state with this tensor (detached, grad-free).
  Tensor detached_copy() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  TensorNode* raw() const { return node_.get(); }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Recorded forward pass: op nodes in topological (creation) order plus the
// registry of leaves they touch.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Populates grad on every tracked node reachable from `loss`.
  // Repeated calls accumulate into leaf grads. Op-node grads are reset at
  // the start of every call. `loss` must be a scalar recorded in this graph.
  void backward(const Tensor& loss);

  // Re-runs the recorded forwards in order, recomputing every op value
  // from current leaf values. With unchanged leaves the results are
  // bit-identical to the original pass.
  void replay();

  std::size_t num_ops() const { return tape_.size(); }

  // Unique leaf nodes referenced by the tape, in first-use order.
  std::vector<Tensor> leaves() const;

  void append(std::shared_ptr<TensorNode> node);

  static Graph* current();

 private:
  friend class Recording;
  std::vector<std::shared_ptr<TensorNode>> tape_;
};

// RAII scope: while alive, ops on this thread record into `g`.
class Recording {
 public:
  explicit Recording(Graph& g);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Graph* prev_;
};

// Convenience wrapper: backward through the graph that recorded `loss`.
void backward(const Tensor& loss);

namespace detail {

// Builds an op node, runs its forward once, and records it if a graph is
// active. Without an active graph the parent links are dropped so eval
// forwards hold no memory beyond their outputs.
Tensor make_op(std::vector<Index> shape,
               std::vector<std::shared_ptr<TensorNode>> parents,
               std::function<void(TensorNode&)> forward,
               std::function<void(TensorNode&)> backward);

}  // namespace detail

}  // namespace svf
