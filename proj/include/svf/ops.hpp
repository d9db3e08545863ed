// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Differentiable operations over Tensor. All free functions; each records
// one node when a Recording scope is active.
//
// Broadcasting rule: elementwise binary ops accept identical shapes, a
// size-1 right operand (scalar broadcast), or a right operand whose shape
// is a trailing suffix of the left one (leading-batch expansion, e.g.
// [T,D] op [D]). Anything else is a ShapeError.

#pragma once

#include <vector>

#include "svf/tensor.hpp"

namespace svf {

class Rng;

// --- elementwise binary -----------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }

// --- linear algebra ----------------------------------------------------------
// Standard matrix product, [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<Index> shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& a, int axis, Index start, Index len);

// --- elementwise unary -------------------------------------------------------
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor swish(const Tensor& x);  // x * sigmoid(x)
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor clamp_min(const Tensor& x, double c);

// Gated linear unit: splits x in half along `axis`, returns a * sigmoid(b).
Tensor glu(const Tensor& x, int axis);

// --- normalization -----------------------------------------------------------
// Max-shifted softmax along `axis` (rank-1 tensors ignore the axis).
Tensor softmax(const Tensor& x, int axis);
// Per-row (last axis) mean/variance normalization with affine gain/bias of
// length cols. Variance is biased; eps smooths constant rows.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// --- reductions ---------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);       // rank-2 -> rank-1
Tensor mean_axis(const Tensor& x, int axis);      // rank-2 -> rank-1
Tensor variance_axis(const Tensor& x, int axis);  // biased, rank-2 -> rank-1

// --- row helpers (rank-2 x, rank-1 s of length rows) --------------------------
Tensor scale_rows(const Tensor& x, const Tensor& s);
Tensor add_rows(const Tensor& x, const Tensor& s);
// Shift rows along the leading (time) axis with zero padding; offset > 0
// moves content toward higher indices.
Tensor shift_rows(const Tensor& x, Index offset);

// --- convolution / attention -------------------------------------------------
// Per-channel 1-D convolution over the time axis (rows), same padding.
// x is [T,C], kernel [K,C] with K odd, bias [C].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// Adds bias[R + clamp(i-j, -R, R)] to scores[i,j]; bias has odd length 2R+1.
Tensor rel_bias_add(const Tensor& scores, const Tensor& bias);

// --- distances ----------------------------------------------------------------
// Per-row mean absolute difference, rank-2 -> rank-1.
Tensor l1_row_mean(const Tensor& a, const Tensor& b);
// Per-row cosine similarity with an eps guard on the norm product.
// Computed as dot / sqrt(max(|a|^2 |b|^2, eps^2)) so identical rows give
// exactly 1.
Tensor cosine_rows(const Tensor& a, const Tensor& b, double eps = 1e-8);

// --- stochastic ----------------------------------------------------------------
// Inverted dropout; identity when rate == 0. Mask is drawn once at call time.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Hard Concrete gate sample: u is a fixed uniform draw per element,
// s = sigmoid((log u - log(1-u) + log_alpha)/beta),
// z = clamp(s*(zeta_high - gamma_low) + gamma_low, 0, 1).
Tensor hard_concrete_sample(const Tensor& log_alpha, const Array& u, double beta,
                            double gamma_low, double zeta_high);

}  // namespace svf
