// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// The full speaker model bundle: encoder + head + feature normalization,
// with checkpoint (de)serialization and eval-time embedding extraction.

#pragma once

#include <string>

#include "svf/conformer.hpp"
#include "svf/fbank.hpp"
#include "svf/heads.hpp"

namespace svf {

struct FeatureNorm {
  bool per_utterance = true;
  FeatureStats stats;  // corpus statistics when per_utterance is false
};

struct SvModel {
  ConformerModel encoder;
  SpeakerHead head;
  FeatureNorm norm;

  // fbank + configured normalization, no augmentation, full length.
  MatrixRM features_for(const Waveform& w) const;

  // Eval-mode embedding of a full utterance.
  Array utterance_embedding(const Waveform& w) const;

  Checkpoint to_checkpoint() const;
  static SvModel from_checkpoint(const Checkpoint& ckpt);
};

}  // namespace svf
