// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// AdamW with decoupled weight decay, plus gradient-ascent slots for the
// Lagrange multipliers (their gradients are sign-flipped before the
// update, turning the shared minimizer into max over those parameters).

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "svf/checkpoint.hpp"
#include "svf/tensor.hpp"

namespace svf {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

  // One update with the given learning rate. Parameters without grads are
  // treated as zero-gradient (they still decay). A NaN gradient aborts
  // with the parameter name.
  void step(double lr);
  void zero_grad();

  void set_ascent(const std::string& name, bool ascent);
  std::int64_t step_count() const { return t_; }
  std::size_t num_params() const { return slots_.size(); }

  // Moments and step counter under "opt."; names must match on load.
  void save_into(Checkpoint& ckpt) const;
  void load_from(const Checkpoint& ckpt);

 private:
  struct Slot {
    std::string name;
    Tensor param;
    Array m, v;
    bool ascent = false;
  };
  std::vector<Slot> slots_;
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace svf
