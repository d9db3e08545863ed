// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "svf/rng.hpp"

namespace svf {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;
using RowArr = Eigen::Array<double, 1, Eigen::Dynamic>;
using ConstRowArrMap = Eigen::Map<const RowArr>;

MatMap grad_mat(TensorNode& n, Index rows, Index cols) {
  n.ensure_grad();
  return MatMap(n.grad.data(), rows, cols);
}

Eigen::Map<Array> grad_arr(TensorNode& n) {
  n.ensure_grad();
  return Eigen::Map<Array>(n.grad.data(), n.grad.size());
}

// Broadcast layout for a binary op: the right operand is repeated `outer`
// times over blocks of length `inner`.
struct Bcast {
  Index outer;
  Index inner;
};

Bcast check_broadcast(const TensorNode& a, const TensorNode& b, const char* op) {
  if (b.value.size() == 1) return {a.value.size(), 1};
  const auto& as = a.shape;
  const auto& bs = b.shape;
  if (bs.size() <= as.size()) {
    bool suffix = true;
    for (std::size_t i = 0; i < bs.size(); ++i) {
      if (bs[bs.size() - 1 - i] != as[as.size() - 1 - i]) {
        suffix = false;
        break;
      }
    }
    if (suffix) {
      Index inner = b.value.size();
      return {a.value.size() / inner, inner};
    }
  }
  throw ShapeError(std::string(op) + ": shapes " + shape_str(as) + " and " + shape_str(bs) +
                   " are not broadcast-compatible");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank 2, got " + shape_str(t.shape()));
  }
}

void require_rank1(const Tensor& t, const char* op) {
  if (t.rank() != 1) {
    throw ShapeError(std::string(op) + ": expected rank 1, got " + shape_str(t.shape()));
  }
}

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  Bcast bc = check_broadcast(*a.raw(), *b.raw(), name);
  auto fwd = [bc, kind](TensorNode& n) {
    const Array& av = n.parents[0]->value;
    const Array& bv = n.parents[1]->value;
    for (Index o = 0; o < bc.outer; ++o) {
      auto seg = n.value.segment(o * bc.inner, bc.inner);
      auto as = av.segment(o * bc.inner, bc.inner);
      switch (kind) {
        case BinKind::Add: seg = as + bv; break;
        case BinKind::Sub: seg = as - bv; break;
        case BinKind::Mul: seg = as * bv; break;
        case BinKind::Div: seg = as / bv; break;
      }
    }
  };
  auto bwd = [bc, kind](TensorNode& n) {
    TensorNode& pa = *n.parents[0];
    TensorNode& pb = *n.parents[1];
    const Array& av = pa.value;
    const Array& bv = pb.value;
    const Array& g = n.grad;
    if (pa.requires_grad) {
      auto ga = grad_arr(pa);
      for (Index o = 0; o < bc.outer; ++o) {
        auto gs = g.segment(o * bc.inner, bc.inner);
        auto dst = ga.segment(o * bc.inner, bc.inner);
        switch (kind) {
          case BinKind::Add:
          case BinKind::Sub: dst += gs; break;
          case BinKind::Mul: dst += gs * bv; break;
          case BinKind::Div: dst += gs / bv; break;
        }
      }
    }
    if (pb.requires_grad) {
      auto gb = grad_arr(pb);
      for (Index o = 0; o < bc.outer; ++o) {
        auto gs = g.segment(o * bc.inner, bc.inner);
        auto as = av.segment(o * bc.inner, bc.inner);
        switch (kind) {
          case BinKind::Add: gb += gs; break;
          case BinKind::Sub: gb -= gs; break;
          case BinKind::Mul: gb += gs * as; break;
          case BinKind::Div: gb -= gs * as / (bv * bv); break;
        }
      }
    }
  };
  return detail::make_op(a.shape(), {a.node(), b.node()}, fwd, bwd);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise binary
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Div, "div"); }

Tensor add_scalar(const Tensor& a, double c) {
  auto fwd = [c](TensorNode& n) { n.value = n.parents[0]->value + c; };
  auto bwd = [](TensorNode& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
  };
  return detail::make_op(a.shape(), {a.node()}, fwd, bwd);
}

Tensor mul_scalar(const Tensor& a, double c) {
  auto fwd = [c](TensorNode& n) { n.value = n.parents[0]->value * c; };
  auto bwd = [c](TensorNode& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad * c);
  };
  return detail::make_op(a.shape(), {a.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  auto fwd = [m, k, n](TensorNode& node) {
    ConstMatMap A(node.parents[0]->value.data(), m, k);
    ConstMatMap B(node.parents[1]->value.data(), k, n);
    MatMap C(node.value.data(), m, n);
    C.noalias() = A * B;
  };
  auto bwd = [m, k, n](TensorNode& node) {
    ConstMatMap A(node.parents[0]->value.data(), m, k);
    ConstMatMap B(node.parents[1]->value.data(), k, n);
    ConstMatMap G(node.grad.data(), m, n);
    if (node.parents[0]->requires_grad) {
      grad_mat(*node.parents[0], m, k).noalias() += G * B.transpose();
    }
    if (node.parents[1]->requires_grad) {
      grad_mat(*node.parents[1], k, n).noalias() += A.transpose() * G;
    }
  };
  return detail::make_op({m, n}, {a.node(), b.node()}, fwd, bwd);
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const Index r = a.rows(), c = a.cols();
  auto fwd = [r, c](TensorNode& n) {
    ConstMatMap A(n.parents[0]->value.data(), r, c);
    MatMap O(n.value.data(), c, r);
    O = A.transpose();
  };
  auto bwd = [r, c](TensorNode& n) {
    if (!n.parents[0]->requires_grad) return;
    ConstMatMap G(n.grad.data(), c, r);
    grad_mat(*n.parents[0], r, c) += G.transpose();
  };
  return detail::make_op({c, r}, {a.node()}, fwd, bwd);
}

Tensor reshape(const Tensor& a, std::vector<Index> shape) {
  if (shape_product(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value; };
  auto bwd = [](TensorNode& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
  };
  return detail::make_op(std::move(shape), {a.node()}, fwd, bwd);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  const Index rank = xs[0].rank();
  if (rank == 1) {
    if (axis != 0) throw ShapeError("concat: rank-1 tensors concat along axis 0");
    Index total = 0;
    std::vector<NodePtr> parents;
    for (const auto& x : xs) {
      require_rank1(x, "concat");
      total += x.size();
      parents.push_back(x.node());
    }
    auto fwd = [](TensorNode& n) {
      Index off = 0;
      for (const auto& p : n.parents) {
        n.value.segment(off, p->value.size()) = p->value;
        off += p->value.size();
      }
    };
    auto bwd = [](TensorNode& n) {
      Index off = 0;
      for (const auto& p : n.parents) {
        if (p->requires_grad) p->accumulate(n.grad.segment(off, p->value.size()));
        off += p->value.size();
      }
    };
    return detail::make_op({total}, std::move(parents), fwd, bwd);
  }

  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  const Index fixed = (axis == 0) ? xs[0].cols() : xs[0].rows();
  Index grown = 0;
  std::vector<NodePtr> parents;
  for (const auto& x : xs) {
    require_rank2(x, "concat");
    const Index keep = (axis == 0) ? x.cols() : x.rows();
    if (keep != fixed) {
      throw ShapeError("concat: incompatible shapes " + shape_str(xs[0].shape()) + " vs " +
                       shape_str(x.shape()));
    }
    grown += (axis == 0) ? x.rows() : x.cols();
    parents.push_back(x.node());
  }
  const Index rows = (axis == 0) ? grown : fixed;
  const Index cols = (axis == 0) ? fixed : grown;
  auto fwd = [axis, rows, cols](TensorNode& n) {
    MatMap O(n.value.data(), rows, cols);
    Index off = 0;
    for (const auto& p : n.parents) {
      ConstMatMap P(p->value.data(), p->shape[0], p->shape[1]);
      if (axis == 0) {
        O.middleRows(off, P.rows()) = P;
        off += P.rows();
      } else {
        O.middleCols(off, P.cols()) = P;
        off += P.cols();
      }
    }
  };
  auto bwd = [axis, rows, cols](TensorNode& n) {
    ConstMatMap G(n.grad.data(), rows, cols);
    Index off = 0;
    for (const auto& p : n.parents) {
      const Index pr = p->shape[0], pc = p->shape[1];
      if (p->requires_grad) {
        auto gp = grad_mat(*p, pr, pc);
        if (axis == 0) gp += G.middleRows(off, pr);
        else gp += G.middleCols(off, pc);
      }
      off += (axis == 0) ? pr : pc;
    }
  };
  return detail::make_op({rows, cols}, std::move(parents), fwd, bwd);
}

Tensor slice(const Tensor& a, int axis, Index start, Index len) {
  if (a.rank() == 1) {
    if (axis != 0) throw ShapeError("slice: rank-1 tensors slice along axis 0");
    if (start < 0 || len <= 0 || start + len > a.size()) {
      throw ShapeError("slice: range out of bounds for " + shape_str(a.shape()));
    }
    auto fwd = [start, len](TensorNode& n) {
      n.value = n.parents[0]->value.segment(start, len);
    };
    auto bwd = [start, len](TensorNode& n) {
      if (!n.parents[0]->requires_grad) return;
      auto g = grad_arr(*n.parents[0]);
      g.segment(start, len) += n.grad;
    };
    return detail::make_op({len}, {a.node()}, fwd, bwd);
  }
  require_rank2(a, "slice");
  const Index r = a.rows(), c = a.cols();
  const Index limit = (axis == 0) ? r : c;
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  if (start < 0 || len <= 0 || start + len > limit) {
    throw ShapeError("slice: range out of bounds for " + shape_str(a.shape()));
  }
  const Index or_ = (axis == 0) ? len : r;
  const Index oc = (axis == 0) ? c : len;
  auto fwd = [axis, r, c, start, len, or_, oc](TensorNode& n) {
    ConstMatMap A(n.parents[0]->value.data(), r, c);
    MatMap O(n.value.data(), or_, oc);
    if (axis == 0) O = A.middleRows(start, len);
    else O = A.middleCols(start, len);
  };
  auto bwd = [axis, r, c, start, len, or_, oc](TensorNode& n) {
    if (!n.parents[0]->requires_grad) return;
    ConstMatMap G(n.grad.data(), or_, oc);
    auto gp = grad_mat(*n.parents[0], r, c);
    if (axis == 0) gp.middleRows(start, len) += G;
    else gp.middleCols(start, len) += G;
  };
  return detail::make_op({or_, oc}, {a.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value.max(0.0); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += (p.value > 0.0).cast<double>() * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor tanh(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value.tanh(); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += (1.0 - n.value.square()) * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor sigmoid(const Tensor& x) {
  auto fwd = [](TensorNode& n) {
    n.value = 1.0 / (1.0 + (-n.parents[0]->value).exp());
  };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.value * (1.0 - n.value) * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor swish(const Tensor& x) {
  auto fwd = [](TensorNode& n) {
    const Array& xv = n.parents[0]->value;
    n.value = xv / (1.0 + (-xv).exp());
  };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    const Array sig = 1.0 / (1.0 + (-p.value).exp());
    grad_arr(p) += (sig + p.value * sig * (1.0 - sig)) * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor exp(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value.exp(); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.value * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor log(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value.log(); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.grad / p.value;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor sqrt(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value.sqrt(); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.grad / (2.0 * n.value);
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor abs(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value = n.parents[0]->value.abs(); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += p.value.sign() * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor clamp_min(const Tensor& x, double c) {
  auto fwd = [c](TensorNode& n) { n.value = n.parents[0]->value.max(c); };
  auto bwd = [c](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += (p.value > c).cast<double>() * n.grad;
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor glu(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    if (x.size() % 2 != 0) throw ShapeError("glu: size must be even, got " + shape_str(x.shape()));
    const Index h = x.size() / 2;
    auto fwd = [h](TensorNode& n) {
      const Array& v = n.parents[0]->value;
      n.value = v.head(h) / (1.0 + (-v.tail(h)).exp());
    };
    auto bwd = [h](TensorNode& n) {
      TensorNode& p = *n.parents[0];
      if (!p.requires_grad) return;
      const Array a = p.value.head(h);
      const Array sig = 1.0 / (1.0 + (-p.value.tail(h)).exp());
      auto g = grad_arr(p);
      g.head(h) += n.grad * sig;
      g.tail(h) += n.grad * a * sig * (1.0 - sig);
    };
    return detail::make_op({h}, {x.node()}, fwd, bwd);
  }
  require_rank2(x, "glu");
  if (axis != 1) throw ShapeError("glu: rank-2 input splits along axis 1");
  if (x.cols() % 2 != 0) throw ShapeError("glu: columns must be even, got " + shape_str(x.shape()));
  const Index r = x.rows(), c = x.cols(), h = c / 2;
  auto fwd = [r, c, h](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, c);
    MatMap O(n.value.data(), r, h);
    O.array() = X.leftCols(h).array() / (1.0 + (-X.rightCols(h)).array().exp());
  };
  auto bwd = [r, c, h](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    ConstMatMap X(p.value.data(), r, c);
    ConstMatMap G(n.grad.data(), r, h);
    auto gp = grad_mat(p, r, c);
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-X.rightCols(h)).array().exp());
    gp.leftCols(h).array() += G.array() * sig;
    gp.rightCols(h).array() += G.array() * X.leftCols(h).array() * sig * (1.0 - sig);
  };
  return detail::make_op({r, h}, {x.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

namespace {

void softmax_vec(const double* x, double* y, Index n) {
  double mx = x[0];
  for (Index i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (Index i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    s += y[i];
  }
  for (Index i = 0; i < n; ++i) y[i] /= s;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    const Index n = x.size();
    auto fwd = [n](TensorNode& node) {
      softmax_vec(node.parents[0]->value.data(), node.value.data(), n);
    };
    auto bwd = [n](TensorNode& node) {
      TensorNode& p = *node.parents[0];
      if (!p.requires_grad) return;
      const double dot = (node.grad * node.value).sum();
      grad_arr(p) += node.value * (node.grad - dot);
    };
    return detail::make_op({n}, {x.node()}, fwd, bwd);
  }
  require_rank2(x, "softmax");
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const Index r = x.rows(), c = x.cols();
  auto fwd = [r, c, axis](TensorNode& node) {
    ConstMatMap X(node.parents[0]->value.data(), r, c);
    MatMap Y(node.value.data(), r, c);
    if (axis == 1) {
      for (Index i = 0; i < r; ++i) {
        Eigen::RowVectorXd row = X.row(i);
        double mx = row.maxCoeff();
        Eigen::RowVectorXd e = (row.array() - mx).exp();
        Y.row(i) = e / e.sum();
      }
    } else {
      for (Index j = 0; j < c; ++j) {
        Eigen::VectorXd col = X.col(j);
        double mx = col.maxCoeff();
        Eigen::VectorXd e = (col.array() - mx).exp();
        Y.col(j) = e / e.sum();
      }
    }
  };
  auto bwd = [r, c, axis](TensorNode& node) {
    TensorNode& p = *node.parents[0];
    if (!p.requires_grad) return;
    ConstMatMap Y(node.value.data(), r, c);
    ConstMatMap G(node.grad.data(), r, c);
    auto gp = grad_mat(p, r, c);
    if (axis == 1) {
      for (Index i = 0; i < r; ++i) {
        const double dot = G.row(i).dot(Y.row(i));
        gp.row(i).array() += Y.row(i).array() * (G.row(i).array() - dot);
      }
    } else {
      for (Index j = 0; j < c; ++j) {
        const double dot = G.col(j).dot(Y.col(j));
        gp.col(j).array() += Y.col(j).array() * (G.col(j).array() - dot);
      }
    }
  };
  return detail::make_op({r, c}, {x.node()}, fwd, bwd);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index r = (x.rank() == 1) ? 1 : x.rows();
  const Index d = (x.rank() == 1) ? x.size() : x.cols();
  require_rank1(gain, "layer_norm gain");
  require_rank1(bias, "layer_norm bias");
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm: gain/bias length must match last axis " + std::to_string(d));
  }
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  auto fwd = [r, d, eps](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, d);
    ConstRowArrMap G(n.parents[1]->value.data(), d);
    ConstRowArrMap B(n.parents[2]->value.data(), d);
    MatMap Y(n.value.data(), r, d);
    for (Index i = 0; i < r; ++i) {
      const double mu = X.row(i).mean();
      const double var = (X.row(i).array() - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps);
      Y.row(i).array() = ((X.row(i).array() - mu) * inv) * G + B;
    }
  };
  auto bwd = [r, d, eps](TensorNode& n) {
    TensorNode& px = *n.parents[0];
    TensorNode& pg = *n.parents[1];
    TensorNode& pb = *n.parents[2];
    ConstMatMap X(px.value.data(), r, d);
    ConstRowArrMap G(pg.value.data(), d);
    ConstMatMap Gy(n.grad.data(), r, d);
    for (Index i = 0; i < r; ++i) {
      const double mu = X.row(i).mean();
      const double var = (X.row(i).array() - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps);
      const RowArr xhat = (X.row(i).array() - mu) * inv;
      const RowArr gy = Gy.row(i).array();
      if (pg.requires_grad) {
        Eigen::Map<RowArr>(grad_arr(pg).data(), d) += gy * xhat;
      }
      if (pb.requires_grad) {
        Eigen::Map<RowArr>(grad_arr(pb).data(), d) += gy;
      }
      if (px.requires_grad) {
        const RowArr dxhat = gy * G;
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xhat).mean();
        auto gx = grad_mat(px, r, d);
        gx.row(i).array() += (dxhat - m1 - xhat * m2) * inv;
      }
    }
  };
  return detail::make_op(x.shape(), {x.node(), gain.node(), bias.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  auto fwd = [](TensorNode& n) { n.value[0] = n.parents[0]->value.sum(); };
  auto bwd = [](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.grad[0];
  };
  return detail::make_op({1}, {x.node()}, fwd, bwd);
}

Tensor mean(const Tensor& x) {
  const double scale = 1.0 / static_cast<double>(x.size());
  auto fwd = [](TensorNode& n) { n.value[0] = n.parents[0]->value.mean(); };
  auto bwd = [scale](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.grad[0] * scale;
  };
  return detail::make_op({1}, {x.node()}, fwd, bwd);
}

namespace {

Tensor axis_reduce(const Tensor& x, int axis, bool take_mean, const char* name) {
  require_rank2(x, name);
  if (axis != 0 && axis != 1) throw ShapeError(std::string(name) + ": axis must be 0 or 1");
  const Index r = x.rows(), c = x.cols();
  const Index out = (axis == 0) ? c : r;
  const double scale = take_mean ? 1.0 / static_cast<double>(axis == 0 ? r : c) : 1.0;
  auto fwd = [r, c, axis, scale](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, c);
    if (axis == 0) {
      Eigen::Map<Eigen::RowVectorXd>(n.value.data(), c) = X.colwise().sum() * scale;
    } else {
      Eigen::Map<Eigen::VectorXd>(n.value.data(), r) = X.rowwise().sum() * scale;
    }
  };
  auto bwd = [r, c, axis, scale](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    auto gp = grad_mat(p, r, c);
    if (axis == 0) {
      gp.array().rowwise() += ConstRowArrMap(n.grad.data(), c) * scale;
    } else {
      gp.array().colwise() += Eigen::Map<const Array>(n.grad.data(), r) * scale;
    }
  };
  return detail::make_op({out}, {x.node()}, fwd, bwd);
}

}  // namespace

Tensor sum_axis(const Tensor& x, int axis) { return axis_reduce(x, axis, false, "sum_axis"); }
Tensor mean_axis(const Tensor& x, int axis) { return axis_reduce(x, axis, true, "mean_axis"); }

Tensor variance_axis(const Tensor& x, int axis) {
  require_rank2(x, "variance_axis");
  if (axis != 0 && axis != 1) throw ShapeError("variance_axis: axis must be 0 or 1");
  const Index r = x.rows(), c = x.cols();
  const Index out = (axis == 0) ? c : r;
  const double n_in = static_cast<double>(axis == 0 ? r : c);
  auto fwd = [r, c, axis, n_in](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, c);
    if (axis == 0) {
      Eigen::RowVectorXd mu = X.colwise().mean();
      Eigen::Map<Eigen::RowVectorXd>(n.value.data(), c) =
          ((X.rowwise() - mu).array().square().colwise().sum() / n_in).matrix();
    } else {
      Eigen::VectorXd mu = X.rowwise().mean();
      Eigen::Map<Eigen::VectorXd>(n.value.data(), r) =
          ((X.colwise() - mu).array().square().rowwise().sum() / n_in).matrix();
    }
  };
  auto bwd = [r, c, axis, n_in](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    ConstMatMap X(p.value.data(), r, c);
    auto gp = grad_mat(p, r, c);
    if (axis == 0) {
      Eigen::RowVectorXd mu = X.colwise().mean();
      ConstRowArrMap g(n.grad.data(), c);
      gp.array() += (X.rowwise() - mu).array().rowwise() * (g * 2.0 / n_in);
    } else {
      Eigen::VectorXd mu = X.rowwise().mean();
      Eigen::Map<const Array> g(n.grad.data(), r);
      gp.array() += (X.colwise() - mu).array().colwise() * (g * 2.0 / n_in);
    }
  };
  return detail::make_op({out}, {x.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// row helpers
// ---------------------------------------------------------------------------

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_rank2(x, "scale_rows");
  require_rank1(s, "scale_rows");
  if (s.size() != x.rows()) {
    throw ShapeError("scale_rows: scale length " + std::to_string(s.size()) +
                     " != rows " + std::to_string(x.rows()));
  }
  const Index r = x.rows(), c = x.cols();
  auto fwd = [r, c](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, c);
    MatMap O(n.value.data(), r, c);
    O.array() = X.array().colwise() * Eigen::Map<const Array>(n.parents[1]->value.data(), r);
  };
  auto bwd = [r, c](TensorNode& n) {
    TensorNode& px = *n.parents[0];
    TensorNode& ps = *n.parents[1];
    ConstMatMap X(px.value.data(), r, c);
    ConstMatMap G(n.grad.data(), r, c);
    if (px.requires_grad) {
      grad_mat(px, r, c).array() +=
          G.array().colwise() * Eigen::Map<const Array>(ps.value.data(), r);
    }
    if (ps.requires_grad) {
      grad_arr(ps) += (G.array() * X.array()).rowwise().sum();
    }
  };
  return detail::make_op({r, c}, {x.node(), s.node()}, fwd, bwd);
}

Tensor add_rows(const Tensor& x, const Tensor& s) {
  require_rank2(x, "add_rows");
  require_rank1(s, "add_rows");
  if (s.size() != x.rows()) {
    throw ShapeError("add_rows: length " + std::to_string(s.size()) + " != rows " +
                     std::to_string(x.rows()));
  }
  const Index r = x.rows(), c = x.cols();
  auto fwd = [r, c](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, c);
    MatMap O(n.value.data(), r, c);
    O.array() = X.array().colwise() + Eigen::Map<const Array>(n.parents[1]->value.data(), r);
  };
  auto bwd = [r, c](TensorNode& n) {
    TensorNode& px = *n.parents[0];
    TensorNode& ps = *n.parents[1];
    ConstMatMap G(n.grad.data(), r, c);
    if (px.requires_grad) grad_mat(px, r, c) += G;
    if (ps.requires_grad) grad_arr(ps) += G.array().rowwise().sum();
  };
  return detail::make_op({r, c}, {x.node(), s.node()}, fwd, bwd);
}

Tensor shift_rows(const Tensor& x, Index offset) {
  require_rank2(x, "shift_rows");
  const Index r = x.rows(), c = x.cols();
  auto fwd = [r, c, offset](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), r, c);
    MatMap O(n.value.data(), r, c);
    O.setZero();
    const Index t0 = std::max<Index>(0, offset);
    const Index t1 = std::min<Index>(r, r + offset);
    if (t1 > t0) O.middleRows(t0, t1 - t0) = X.middleRows(t0 - offset, t1 - t0);
  };
  auto bwd = [r, c, offset](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    ConstMatMap G(n.grad.data(), r, c);
    auto gp = grad_mat(p, r, c);
    const Index t0 = std::max<Index>(0, offset);
    const Index t1 = std::min<Index>(r, r + offset);
    if (t1 > t0) gp.middleRows(t0 - offset, t1 - t0) += G.middleRows(t0, t1 - t0);
  };
  return detail::make_op({r, c}, {x.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// convolution / attention
// ---------------------------------------------------------------------------

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank2(x, "depthwise_conv1d");
  require_rank2(kernel, "depthwise_conv1d kernel");
  require_rank1(bias, "depthwise_conv1d bias");
  const Index t = x.rows(), c = x.cols(), k = kernel.rows();
  if (kernel.cols() != c || bias.size() != c) {
    throw ShapeError("depthwise_conv1d: kernel " + shape_str(kernel.shape()) + " / bias length " +
                     std::to_string(bias.size()) + " do not match channels " + std::to_string(c));
  }
  if (k % 2 == 0) throw ShapeError("depthwise_conv1d: kernel length must be odd");
  const Index pad = (k - 1) / 2;
  auto fwd = [t, c, k, pad](TensorNode& n) {
    ConstMatMap X(n.parents[0]->value.data(), t, c);
    ConstMatMap K(n.parents[1]->value.data(), k, c);
    ConstRowArrMap B(n.parents[2]->value.data(), c);
    MatMap O(n.value.data(), t, c);
    O.setZero();
    O.array().rowwise() += B;
    for (Index j = 0; j < k; ++j) {
      const Index off = j - pad;
      const Index t0 = std::max<Index>(0, -off);
      const Index t1 = std::min<Index>(t, t - off);
      if (t1 <= t0) continue;
      O.middleRows(t0, t1 - t0).array() +=
          X.middleRows(t0 + off, t1 - t0).array().rowwise() * K.row(j).array();
    }
  };
  auto bwd = [t, c, k, pad](TensorNode& n) {
    TensorNode& px = *n.parents[0];
    TensorNode& pk = *n.parents[1];
    TensorNode& pb = *n.parents[2];
    ConstMatMap X(px.value.data(), t, c);
    ConstMatMap K(pk.value.data(), k, c);
    ConstMatMap G(n.grad.data(), t, c);
    if (pb.requires_grad) {
      grad_arr(pb) += G.array().colwise().sum().transpose();
    }
    for (Index j = 0; j < k; ++j) {
      const Index off = j - pad;
      const Index t0 = std::max<Index>(0, -off);
      const Index t1 = std::min<Index>(t, t - off);
      if (t1 <= t0) continue;
      if (px.requires_grad) {
        grad_mat(px, t, c).middleRows(t0 + off, t1 - t0).array() +=
            G.middleRows(t0, t1 - t0).array().rowwise() * K.row(j).array();
      }
      if (pk.requires_grad) {
        grad_mat(pk, k, c).row(j).array() +=
            (G.middleRows(t0, t1 - t0).array() * X.middleRows(t0 + off, t1 - t0).array())
                .colwise()
                .sum();
      }
    }
  };
  return detail::make_op({t, c}, {x.node(), kernel.node(), bias.node()}, fwd, bwd);
}

Tensor rel_bias_add(const Tensor& scores, const Tensor& bias) {
  require_rank2(scores, "rel_bias_add");
  require_rank1(bias, "rel_bias_add bias");
  if (bias.size() % 2 == 0) throw ShapeError("rel_bias_add: bias length must be odd");
  const Index tq = scores.rows(), tk = scores.cols();
  const Index radius = (bias.size() - 1) / 2;
  auto idx = [radius](Index i, Index j) {
    Index off = i - j;
    if (off < -radius) off = -radius;
    if (off > radius) off = radius;
    return radius + off;
  };
  auto fwd = [tq, tk, idx](TensorNode& n) {
    ConstMatMap S(n.parents[0]->value.data(), tq, tk);
    const Array& B = n.parents[1]->value;
    MatMap O(n.value.data(), tq, tk);
    for (Index i = 0; i < tq; ++i) {
      for (Index j = 0; j < tk; ++j) O(i, j) = S(i, j) + B[idx(i, j)];
    }
  };
  auto bwd = [tq, tk, idx](TensorNode& n) {
    TensorNode& ps = *n.parents[0];
    TensorNode& pb = *n.parents[1];
    ConstMatMap G(n.grad.data(), tq, tk);
    if (ps.requires_grad) grad_mat(ps, tq, tk) += G;
    if (pb.requires_grad) {
      auto gb = grad_arr(pb);
      for (Index i = 0; i < tq; ++i) {
        for (Index j = 0; j < tk; ++j) gb[idx(i, j)] += G(i, j);
      }
    }
  };
  return detail::make_op({tq, tk}, {scores.node(), bias.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// distances
// ---------------------------------------------------------------------------

Tensor l1_row_mean(const Tensor& a, const Tensor& b) {
  require_rank2(a, "l1_row_mean");
  require_rank2(b, "l1_row_mean");
  if (a.shape() != b.shape()) {
    throw ShapeError("l1_row_mean: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const Index r = a.rows(), c = a.cols();
  auto fwd = [r, c](TensorNode& n) {
    ConstMatMap A(n.parents[0]->value.data(), r, c);
    ConstMatMap B(n.parents[1]->value.data(), r, c);
    Eigen::Map<Eigen::VectorXd>(n.value.data(), r) =
        ((A - B).array().abs().rowwise().sum() / static_cast<double>(c)).matrix();
  };
  auto bwd = [r, c](TensorNode& n) {
    TensorNode& pa = *n.parents[0];
    TensorNode& pb = *n.parents[1];
    ConstMatMap A(pa.value.data(), r, c);
    ConstMatMap B(pb.value.data(), r, c);
    Eigen::Map<const Array> g(n.grad.data(), r);
    const Eigen::ArrayXXd s =
        (A - B).array().sign().colwise() * (g / static_cast<double>(c));
    if (pa.requires_grad) grad_mat(pa, r, c).array() += s;
    if (pb.requires_grad) grad_mat(pb, r, c).array() -= s;
  };
  return detail::make_op({r}, {a.node(), b.node()}, fwd, bwd);
}

Tensor cosine_rows(const Tensor& a, const Tensor& b, double eps) {
  require_rank2(a, "cosine_rows");
  require_rank2(b, "cosine_rows");
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine_rows: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const Index r = a.rows(), c = a.cols();
  const double eps2 = eps * eps;
  auto fwd = [r, c, eps2](TensorNode& n) {
    ConstMatMap A(n.parents[0]->value.data(), r, c);
    ConstMatMap B(n.parents[1]->value.data(), r, c);
    for (Index i = 0; i < r; ++i) {
      const double dot = A.row(i).dot(B.row(i));
      const double sa = A.row(i).squaredNorm();
      const double sb = B.row(i).squaredNorm();
      n.value[i] = dot / std::sqrt(std::max(sa * sb, eps2));
    }
  };
  auto bwd = [r, c, eps2](TensorNode& n) {
    TensorNode& pa = *n.parents[0];
    TensorNode& pb = *n.parents[1];
    ConstMatMap A(pa.value.data(), r, c);
    ConstMatMap B(pb.value.data(), r, c);
    for (Index i = 0; i < r; ++i) {
      const double g = n.grad[i];
      if (g == 0.0) continue;
      const double dot = A.row(i).dot(B.row(i));
      const double sa = A.row(i).squaredNorm();
      const double sb = B.row(i).squaredNorm();
      const bool clamped = sa * sb <= eps2;
      const double den = std::sqrt(std::max(sa * sb, eps2));
      const double y = dot / den;
      if (pa.requires_grad) {
        auto ga = grad_mat(pa, r, c);
        ga.row(i) += g * (B.row(i) / den);
        if (!clamped) ga.row(i) -= g * (y / sa) * A.row(i);
      }
      if (pb.requires_grad) {
        auto gb = grad_mat(pb, r, c);
        gb.row(i) += g * (A.row(i) / den);
        if (!clamped) gb.row(i) -= g * (y / sb) * B.row(i);
      }
    }
  };
  return detail::make_op({r}, {a.node(), b.node()}, fwd, bwd);
}

// ---------------------------------------------------------------------------
// stochastic
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  auto mask = std::make_shared<Array>(x.size());
  const double keep = 1.0 - rate;
  for (Index i = 0; i < x.size(); ++i) {
    (*mask)[i] = (rng.uniform() >= rate) ? 1.0 / keep : 0.0;
  }
  auto fwd = [mask](TensorNode& n) { n.value = n.parents[0]->value * (*mask); };
  auto bwd = [mask](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    grad_arr(p) += n.grad * (*mask);
  };
  return detail::make_op(x.shape(), {x.node()}, fwd, bwd);
}

Tensor hard_concrete_sample(const Tensor& log_alpha, const Array& u, double beta,
                            double gamma_low, double zeta_high) {
  require_rank1(log_alpha, "hard_concrete_sample");
  if (u.size() != log_alpha.size()) {
    throw ShapeError("hard_concrete_sample: uniform draw length mismatch");
  }
  auto logit_u = std::make_shared<Array>(u.size());
  for (Index i = 0; i < u.size(); ++i) {
    const double ui = std::min(std::max(u[i], 1e-12), 1.0 - 1e-12);
    (*logit_u)[i] = std::log(ui) - std::log1p(-ui);
  }
  const double span = zeta_high - gamma_low;
  auto fwd = [logit_u, beta, gamma_low, span](TensorNode& n) {
    const Array& la = n.parents[0]->value;
    const Array s = 1.0 / (1.0 + (-((*logit_u) + la) / beta).exp());
    n.value = (s * span + gamma_low).min(1.0).max(0.0);
  };
  auto bwd = [logit_u, beta, gamma_low, span](TensorNode& n) {
    TensorNode& p = *n.parents[0];
    if (!p.requires_grad) return;
    const Array s = 1.0 / (1.0 + (-((*logit_u) + p.value) / beta).exp());
    const Array raw = s * span + gamma_low;
    const Array inside = ((raw > 0.0) && (raw < 1.0)).cast<double>();
    grad_arr(p) += n.grad * inside * span * s * (1.0 - s) / beta;
  };
  return detail::make_op(log_alpha.shape(), {log_alpha.node()}, fwd, bwd);
}

}  // namespace svf
