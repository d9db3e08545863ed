// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/gates.hpp"

#include <cmath>

namespace svf {

namespace {

// Parameter counts per structure kind, from the owning layer's dims.
Index head_group_params(const ConformerLayer& L, int model_dim) {
  const Index d = model_dim;
  const Index hd = L.attn.head_dim;
  const Index rel = L.attn.rel_bias.cols();
  // q/k/v slices with biases, o columns, this head's rel-bias row.
  return 3 * (d * hd + hd) + hd * d + rel;
}

Index ffn_group_params(int model_dim) {
  // in column + bias + out row.
  return 2 * static_cast<Index>(model_dim) + 1;
}

Index conv_group_params(const ConformerLayer& L, int model_dim) {
  const Index d = model_dim;
  const Index k = L.conv.kernel;
  // pw1 value+gate columns with biases, depthwise tap column + bias, pw2 row.
  return 2 * (d + 1) + (k + 1) + d;
}

}  // namespace

GateSet GateSet::make(const ConformerModel& model, double log_alpha_init) {
  GateSet gs;
  const int d = model.config().model_dim;
  const auto& layers = model.layers();
  for (int li = 0; li < static_cast<int>(layers.size()); ++li) {
    const ConformerLayer& L = layers[static_cast<std::size_t>(li)];
    for (int h = 0; h < L.attn.num_heads; ++h) {
      gs.groups.push_back({GateKind::AttentionHead, li, 0, h, head_group_params(L, d)});
    }
    for (int u = 0; u < L.ffn1.hidden; ++u) {
      gs.groups.push_back({GateKind::FfnUnit, li, 0, u, ffn_group_params(d)});
    }
    for (int u = 0; u < L.ffn2.hidden; ++u) {
      gs.groups.push_back({GateKind::FfnUnit, li, 1, u, ffn_group_params(d)});
    }
    for (int c = 0; c < L.conv.channels; ++c) {
      gs.groups.push_back({GateKind::ConvChannel, li, 0, c, conv_group_params(L, d)});
    }
  }
  gs.log_alpha = Tensor::full({static_cast<Index>(gs.groups.size())}, log_alpha_init, true);
  return gs;
}

Index GateSet::total_params() const {
  Index n = 0;
  for (const auto& g : groups) n += g.param_count;
  return n;
}

void GateSet::check_layout(const ConformerModel& model) const {
  GateSet fresh = make(model, 0.0);
  if (fresh.groups.size() != groups.size()) {
    throw StructuralError("gates: layout has " + std::to_string(groups.size()) +
                          " groups, model needs " + std::to_string(fresh.groups.size()));
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const GateGroup& a = groups[i];
    const GateGroup& b = fresh.groups[i];
    if (a.kind != b.kind || a.layer != b.layer || a.slot != b.slot || a.index != b.index ||
        a.param_count != b.param_count) {
      throw StructuralError("gates: group " + std::to_string(i) + " does not match the model");
    }
  }
  if (log_alpha.size() != static_cast<Index>(groups.size())) {
    throw StructuralError("gates: log_alpha length mismatch");
  }
}

Tensor GateSet::sample(Rng& rng) const {
  Array u(log_alpha.size());
  for (Index i = 0; i < u.size(); ++i) u[i] = rng.uniform();
  return hard_concrete_sample(log_alpha, u, beta, gamma_low, zeta_high);
}

Array GateSet::deterministic() const {
  Array z(log_alpha.size());
  for (Index i = 0; i < z.size(); ++i) {
    z[i] = deterministic_gate(log_alpha.value()[i], beta, gamma_low, zeta_high);
  }
  return z;
}

Tensor GateSet::open_probs() const {
  const double shift = beta * std::log(-gamma_low / zeta_high);
  return sigmoid(add_scalar(log_alpha, -shift));
}

Tensor GateSet::expected_l0() const {
  Array counts(static_cast<Index>(groups.size()));
  for (std::size_t i = 0; i < groups.size(); ++i) {
    counts[static_cast<Index>(i)] = static_cast<double>(groups[i].param_count);
  }
  Tensor weights = Tensor::from_flat({counts.size()}, counts);
  return sum(mul(open_probs(), weights));
}

double GateSet::expected_l0_value() const {
  double total = 0.0;
  const double shift = beta * std::log(-gamma_low / zeta_high);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-(log_alpha.value()[static_cast<Index>(i)] - shift)));
    total += static_cast<double>(groups[i].param_count) * p;
  }
  return total;
}

GateTensors GateSet::slice_per_layer(const Tensor& z, const ConformerModel& model) const {
  check_layout(model);
  if (z.size() != num_groups()) {
    throw StructuralError("gates: value vector length " + std::to_string(z.size()) +
                          " != group count " + std::to_string(num_groups()));
  }
  GateTensors out;
  out.layers.resize(model.layers().size());
  Index off = 0;
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    const ConformerLayer& L = model.layers()[li];
    LayerGates& lg = out.layers[li];
    if (L.attn.num_heads > 0) {
      lg.head = slice(z, 0, off, L.attn.num_heads);
      off += L.attn.num_heads;
    }
    if (L.ffn1.hidden > 0) {
      lg.ffn1 = slice(z, 0, off, L.ffn1.hidden);
      off += L.ffn1.hidden;
    }
    if (L.ffn2.hidden > 0) {
      lg.ffn2 = slice(z, 0, off, L.ffn2.hidden);
      off += L.ffn2.hidden;
    }
    if (L.conv.channels > 0) {
      lg.conv = slice(z, 0, off, L.conv.channels);
      off += L.conv.channels;
    }
  }
  return out;
}

double gate_open_prob(double log_alpha, double beta, double gamma_low, double zeta_high) {
  const double shift = beta * std::log(-gamma_low / zeta_high);
  return 1.0 / (1.0 + std::exp(-(log_alpha - shift)));
}

double deterministic_gate(double log_alpha, double beta, double gamma_low, double zeta_high) {
  (void)beta;
  const double s = 1.0 / (1.0 + std::exp(-log_alpha));
  const double raw = s * (zeta_high - gamma_low) + gamma_low;
  return std::min(1.0, std::max(0.0, raw));
}

double SparsityController::ramped_target(Index step) const {
  if (warmup_steps <= 0 || step >= warmup_steps) return target;
  return target * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

Tensor SparsityController::penalty(const GateSet& gates, Index step) const {
  const double total = static_cast<double>(gates.total_params());
  const double t_hat = ramped_target(step);
  // s_hat - t_hat = (1 - t_hat) - expected_l0 / total
  Tensor diff = add_scalar(mul_scalar(gates.expected_l0(), -1.0 / total), 1.0 - t_hat);
  return add(mul(lambda1, diff), mul(lambda2, mul(diff, diff)));
}

}  // namespace svf
