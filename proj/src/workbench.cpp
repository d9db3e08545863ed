// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/workbench.hpp"

namespace svf {

MatrixRM SvModel::features_for(const Waveform& w) const {
  FbankFeatures f = fbank(w);
  if (norm.per_utterance) {
    return normalize(f, feature_stats(f)).frames;
  }
  if (norm.stats.mean.size() == 0) {
    throw ContractError("SvModel: corpus normalization selected but no stats present");
  }
  return normalize(f, norm.stats).frames;
}

Array SvModel::utterance_embedding(const Waveform& w) const {
  Tensor feats = Tensor::from_matrix(features_for(w));
  LayerStack stack = encoder.encode(feats, RunMode::Eval);
  Tensor emb = head.embed(stack);
  return emb.value();
}

Checkpoint SvModel::to_checkpoint() const {
  Checkpoint ckpt;
  encoder.save_into(ckpt);
  head.save_into(ckpt);
  ckpt.put_scalar("meta.norm.per_utterance", norm.per_utterance ? 1.0 : 0.0);
  if (!norm.per_utterance) {
    ckpt.put_array("norm.mean", {norm.stats.mean.size()}, norm.stats.mean);
    ckpt.put_array("norm.scale", {norm.stats.scale.size()}, norm.stats.scale);
  }
  return ckpt;
}

SvModel SvModel::from_checkpoint(const Checkpoint& ckpt) {
  SvModel m;
  m.encoder = ConformerModel::load_from(ckpt);
  m.head = SpeakerHead::load_from(ckpt);
  m.norm.per_utterance = ckpt.get_scalar("meta.norm.per_utterance") != 0.0;
  if (!m.norm.per_utterance) {
    m.norm.stats.mean = ckpt.get("norm.mean").data;
    m.norm.stats.scale = ckpt.get("norm.scale").data;
  }
  return m;
}

}  // namespace svf
