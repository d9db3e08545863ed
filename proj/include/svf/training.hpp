// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// The staged training orchestrator: freeze -> joint fine-tune -> LMFT.
// Each stage crops utterances to a random frame length, optionally
// augments and speed-perturbs, and optimizes ArcFace over the selected
// parameter subset with its own LR schedule.
//
// All randomness is derived from the stage rng via (name, epoch) streams,
// so resuming from an epoch-boundary checkpoint reproduces the remaining
// trajectory bit for bit.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "svf/augment.hpp"
#include "svf/data.hpp"
#include "svf/losses.hpp"
#include "svf/optim.hpp"
#include "svf/pruning.hpp"
#include "svf/schedule.hpp"
#include "svf/workbench.hpp"

namespace svf {

enum class ParamSelector { HeadOnly, HeadLora, All };

ParamSelector selector_from_name(const std::string& name);
const char* selector_name(ParamSelector s);

struct StageConfig {
  int id = 1;  // 1 freeze, 2 joint, 3 lmft
  std::string name = "freeze";
  int epochs = 5;
  Schedule schedule;
  Index frame_min = 200;
  Index frame_max = 300;
  double margin = 0.2;
  double scale = 32.0;
  bool augment = true;
  bool speed_perturb = true;
  ParamSelector selector = ParamSelector::HeadOnly;
  Index batch_size = 32;
  double weight_decay = 1e-4;
  AugmentPolicy augment_policy;

  void validate() const;
};

struct TrainData {
  std::vector<Waveform> waves;
  std::vector<int> speaker_index;
  std::vector<std::string> utt_ids;
  int n_speakers = 0;

  static TrainData load(const Manifest& manifest, const std::string& root_dir);
  int num_classes(bool speed_perturb) const {
    return speed_perturb ? 3 * n_speakers : n_speakers;
  }
};

// Clean-feature corpus statistics over the training set.
FeatureStats corpus_stats(const TrainData& data);

struct StageResult {
  std::vector<double> epoch_mean_loss;
  std::vector<std::string> metric_lines;  // "epoch<TAB>step<TAB>lr<TAB>loss"
};

// Runs epochs [start_epoch, cfg.epochs) in place. `on_epoch_end` fires
// after each epoch with (epoch, optimizer) so the caller can checkpoint.
StageResult run_stage(SvModel& model, ArcFaceParams& arcface, const TrainData& data,
                      const StageConfig& cfg, const Rng& stage_rng, int start_epoch = 0,
                      AdamW* resumed_optimizer = nullptr,
                      const std::function<void(int, AdamW&)>& on_epoch_end = {});

// LMFT drops the speed-perturbed classes: keeps the factor-1.0 row of each
// speaker (class 3s+1) when perturbation was on.
ArcFaceParams lmft_class_subset(const ArcFaceParams& src, int n_speakers);

// Parameters an optimizer may touch under the given selector; also flips
// requires_grad so frozen parameters receive no gradients at all.
std::vector<std::pair<std::string, Tensor>> select_trainable(SvModel& model,
                                                             ArcFaceParams& arcface,
                                                             ParamSelector selector);

}  // namespace svf
