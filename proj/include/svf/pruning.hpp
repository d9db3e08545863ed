// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Knowledge-distillation-guided structured pruning: the min-max training
// loop over (student params, log_alpha) vs (lambda1, lambda2), physical
// extraction of the pruned encoder, and the per-layer retention report.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "svf/gates.hpp"
#include "svf/losses.hpp"
#include "svf/optim.hpp"
#include "svf/rng.hpp"

namespace svf {

struct PruneReport {
  struct LayerRow {
    int layer = 0;
    int heads_kept = 0, heads_total = 0;
    int ffn1_kept = 0, ffn1_total = 0;
    int ffn2_kept = 0, ffn2_total = 0;
    int conv_kept = 0, conv_total = 0;
  };
  std::vector<LayerRow> rows;
  Index prunable_total = 0;
  Index prunable_kept = 0;

  double achieved_sparsity() const {
    return prunable_total == 0
               ? 0.0
               : 1.0 - static_cast<double>(prunable_kept) / static_cast<double>(prunable_total);
  }
  std::string to_text() const;
};

// Physically removes every group whose deterministic gate is zero and folds
// surviving gate values into the structure's output projection. The
// extracted forward matches the gated forward to ~1e-9. A layer losing all
// attention heads is a StructuralError (lower the target or exempt the
// layer). LoRA must be merged first.
ConformerModel extract_pruned(const ConformerModel& model, const GateSet& gates,
                              PruneReport* report = nullptr);

struct PruneTrainConfig {
  Index steps = 2000;
  Index batch_size = 1;
  double lr_params = 2e-4;
  double lr_sparsity = 2e-2;  // log_alpha
  double lr_lambda = 2e-2;    // Lagrange multiplier ascent
  double weight_decay = 0.0;
  Index frame_min = 150;
  Index frame_max = 250;
  DistillConfig distill;
};

struct PruneStats {
  Index steps_run = 0;
  double final_distill = 0.0;      // mean distill loss over the last 50 steps
  double final_floor = 0.0;        // mean -(L+1)*T over the same window
  double expected_sparsity = 0.0;  // 1 - E[L0]/total at the end
};

// Teacher stays frozen; student and gates are optimized against
// distill_loss + lagrangian_penalty. Features are normalized fbank
// matrices [T x 80]; each step crops a random segment. Aborts with
// NumericError if the loss goes non-finite.
PruneStats prune_train(ConformerModel& student, const ConformerModel& teacher,
                       const std::vector<MatrixRM>& features, GateSet& gates,
                       SparsityController& controller, const PruneTrainConfig& cfg, Rng& rng,
                       const std::function<void(Index, double, double, double)>& on_step = {});

// Plain distillation of `student` toward `teacher` (no gates), used after
// extraction. Returns the mean distill loss of the final epoch.
double distill_train(ConformerModel& student, const ConformerModel& teacher,
                     const std::vector<MatrixRM>& features, Index epochs, double lr,
                     const PruneTrainConfig& cfg, Rng& rng);

// Deterministic random crop (or cyclic tile when too short) of fbank rows.
MatrixRM crop_or_tile(const MatrixRM& frames, Index target, Rng& rng);

}  // namespace svf
