// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Command implementations shared by the CLI and the test suites. Every
// command is a pure function of (config, seed) up to filesystem
// timestamps.

#pragma once

#include <string>
#include <vector>

#include "svf/config.hpp"
#include "svf/losses.hpp"
#include "svf/pruning.hpp"
#include "svf/training.hpp"
#include "svf/workbench.hpp"

namespace svf {

// Generates the synthetic corpus under data.dir: wav/, manifest_train.tsv,
// manifest_eval.tsv, trials.txt (eval pairs), trials_dev.txt (dev pairs).
// Refuses to overwrite an existing populated directory without force.
void cmd_synth(const RunConfig& cfg, bool force);

// Runs the requested stages (subset of {1,2,3}) in order, resuming from
// epoch checkpoints when present. Writes stageN_epochE.ckpt, stageN.ckpt
// and metrics_stageN.log under train.out_dir.
void cmd_train(const RunConfig& cfg, const std::vector<int>& stages);

struct PruneOutcome {
  double achieved_sparsity = 0.0;
  double expected_sparsity = 0.0;
  double final_distill = 0.0;
  double final_floor = 0.0;
  double post_distill_loss = 0.0;
  double prune_train_seconds = 0.0;
  PruneReport report;
};

// Distillation-guided pruning of the teacher checkpoint; writes
// pruned.ckpt, prune_state.ckpt, prune_report.txt and prune_metrics.log.
PruneOutcome cmd_prune(const RunConfig& cfg);

struct EvalRow {
  std::string name;  // "raw", "as_norm", "as_norm+qmf"
  double eer = 0.0;
  double mindcf = 0.0;
};

// Extracts embeddings, scores the trial list, applies optional AS-norm and
// QMF, writes score files + embeddings.ckpt, and returns the metric rows.
std::vector<EvalRow> cmd_eval(const RunConfig& cfg);

// Standalone scoring: either recomputes scores from an embedding file or
// reads an existing score file, then reports EER/minDCF.
EvalRow cmd_score(const RunConfig& cfg);

// Model construction from a config (fresh init at the given seed).
SvModel build_model(const RunConfig& cfg, std::uint64_t seed, int num_layers_override = 0);

// Stage configs resolved from the config file.
StageConfig stage_config(const RunConfig& cfg, int stage_id);

}  // namespace svf
