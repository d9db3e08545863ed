// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/optim.hpp"

#include <cmath>

namespace svf {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg) : cfg_(cfg) {
  slots_.reserve(params.size());
  for (auto& [name, t] : params) {
    Slot s;
    s.name = name;
    s.param = t;
    s.m = Array::Zero(t.size());
    s.v = Array::Zero(t.size());
    slots_.push_back(std::move(s));
  }
}

void AdamW::set_ascent(const std::string& name, bool ascent) {
  for (auto& s : slots_) {
    if (s.name == name) {
      s.ascent = ascent;
      return;
    }
  }
  throw ContractError("AdamW: no parameter named \"" + name + "\"");
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    Array g = s.param.has_grad() ? s.param.grad() : Array::Zero(s.param.size());
    if (!g.isFinite().all()) {
      throw NumericError("AdamW: non-finite gradient for \"" + s.name + "\"");
    }
    if (s.ascent) g = -g;
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * g.square();
    const Array m_hat = s.m / bc1;
    const Array v_hat = s.v / bc2;
    Array& p = s.param.mutable_value();
    p -= lr * cfg_.weight_decay * p;
    p -= lr * m_hat / (v_hat.sqrt() + cfg_.eps);
  }
}

void AdamW::save_into(Checkpoint& ckpt) const {
  ckpt.put_scalar("opt.step", static_cast<double>(t_));
  for (const auto& s : slots_) {
    ckpt.put_array("opt.m." + s.name, s.param.shape(), s.m);
    ckpt.put_array("opt.v." + s.name, s.param.shape(), s.v);
  }
}

void AdamW::load_from(const Checkpoint& ckpt) {
  t_ = static_cast<std::int64_t>(ckpt.get_scalar("opt.step"));
  for (auto& s : slots_) {
    s.m = ckpt.get("opt.m." + s.name).data;
    s.v = ckpt.get("opt.v." + s.name).data;
    if (s.m.size() != s.param.size() || s.v.size() != s.param.size()) {
      throw IoError("AdamW: moment size mismatch for \"" + s.name + "\"");
    }
  }
}

}  // namespace svf
