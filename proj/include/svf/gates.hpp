// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Hard Concrete gates over the encoder's prunable structures (attention
// heads, FFN units, conv channels), expected-L0 accounting and the
// augmented-Lagrangian sparsity controller.
//
// Constants: beta = 2/3, stretch interval [gamma_low, zeta_high] =
// [-0.1, 1.1]. Training samples
//   s = sigmoid((log u - log(1-u) + log_alpha) / beta)
//   z = clamp(s * (zeta_high - gamma_low) + gamma_low, 0, 1)
// and evaluation uses the deterministic estimator with s = sigmoid(log_alpha).
// P(z > 0) = sigmoid(log_alpha - beta * log(-gamma_low / zeta_high)).

#pragma once

#include <vector>

#include "svf/conformer.hpp"
#include "svf/ops.hpp"

namespace svf {

enum class GateKind { AttentionHead, FfnUnit, ConvChannel };

struct GateGroup {
  GateKind kind;
  int layer = 0;
  int slot = 0;  // which FFN (0 or 1); 0 for other kinds
  int index = 0;
  Index param_count = 0;
};

struct GateSet {
  std::vector<GateGroup> groups;
  Tensor log_alpha;  // [num groups], learnable
  double beta = 2.0 / 3.0;
  double gamma_low = -0.1;
  double zeta_high = 1.1;

  // One group per head / FFN unit / conv channel of every layer, with |g|
  // equal to that structure's parameter count.
  static GateSet make(const ConformerModel& model, double log_alpha_init);

  Index num_groups() const { return static_cast<Index>(groups.size()); }
  Index total_params() const;

  // Throws StructuralError if the group layout no longer matches the model.
  void check_layout(const ConformerModel& model) const;

  // Stochastic gate vector (records a differentiable node when a graph is
  // active); u is drawn from rng, one uniform per group.
  Tensor sample(Rng& rng) const;

  // Deterministic eval-time gates.
  Array deterministic() const;

  // Differentiable per-group open probabilities / expected retained count.
  Tensor open_probs() const;
  Tensor expected_l0() const;
  double expected_l0_value() const;

  // Maps a flat gate vector onto per-layer LayerGates for the encoder.
  GateTensors slice_per_layer(const Tensor& z, const ConformerModel& model) const;
};

double gate_open_prob(double log_alpha, double beta = 2.0 / 3.0, double gamma_low = -0.1,
                      double zeta_high = 1.1);
double deterministic_gate(double log_alpha, double beta = 2.0 / 3.0, double gamma_low = -0.1,
                          double zeta_high = 1.1);

// Learnable Lagrange multipliers steering achieved sparsity to the target.
// The optimizer minimizes over log_alpha and maximizes over lambda1/2
// (register them as ascent parameters).
struct SparsityController {
  Tensor lambda1;  // scalar
  Tensor lambda2;  // scalar
  double target = 0.5;     // in [0, 1)
  Index warmup_steps = 10000;

  SparsityController() : lambda1(Tensor::zeros({1}, true)), lambda2(Tensor::zeros({1}, true)) {}
  SparsityController(double t, Index warmup) : SparsityController() {
    if (t < 0.0 || t >= 1.0) throw ConfigError("sparsity target must be in [0, 1)");
    target = t;
    warmup_steps = warmup;
  }

  // Linear ramp 0 -> target over warmup_steps, constant after.
  double ramped_target(Index step) const;

  // lambda1 (s_hat - t_hat) + lambda2 (s_hat - t_hat)^2 where
  // s_hat = 1 - expected_l0 / total.
  Tensor penalty(const GateSet& gates, Index step) const;
};

}  // namespace svf
