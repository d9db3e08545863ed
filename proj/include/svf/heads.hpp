// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Speaker-embedding heads over the encoder's layer stack:
//   weighted_avg     - learnable layer-softmax average into a small
//                      dilated-conv frame network (compact stand-in for an
//                      ECAPA-TDNN backend), then ASP and a linear map.
//   mfa              - channel-wise concat of all layers -> ASP -> linear.
//   adapter_mfa      - per-layer adapter (linear -> layernorm -> relu ->
//                      linear) before the concat.
//   lora_adapter_mfa - adapter_mfa head; the LoRA part lives in the encoder.
// ASP attention is channel-shared: one scalar logit per frame.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "svf/checkpoint.hpp"
#include "svf/conformer.hpp"

namespace svf {

enum class HeadKind { WeightedAvg, Mfa, AdapterMfa, LoraAdapterMfa };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

struct HeadConfig {
  HeadKind kind = HeadKind::AdapterMfa;
  int embed_dim = 256;
  int adapter_dim = 128;   // d'
  int asp_hidden = 0;      // 0 = auto: adapter_dim with adapters, else model dim
  int ecapa_channels = 128;
  int lora_rank = 64;
  double lora_alpha = 128.0;
};

struct AdapterLayerParams {
  LinearParams lin1;  // [D x d']
  LayerNormParams ln;
  LinearParams lin2;  // [d' x d']
};

struct AspParams {
  LinearParams att;  // [C x hidden]
  Tensor v;          // [hidden]
};

// One dilated 1-D conv block with a residual connection: kernel 3 over
// time, full channel mixing per tap.
struct ConvBlockParams {
  std::vector<Tensor> taps;  // 3 matrices [C x C]
  Tensor bias;               // [C]
  LayerNormParams ln;
  int dilation = 1;
};

struct SpeakerHead {
  HeadConfig cfg;
  int stack_depth = 0;  // L+1
  int in_dim = 0;       // encoder model dim

  Tensor layer_w;  // [stack_depth], weighted_avg only
  LinearParams ecapa_in;
  std::vector<ConvBlockParams> blocks;

  std::vector<AdapterLayerParams> adapter;  // adapter heads only
  AspParams asp;
  LinearParams emb;

  static SpeakerHead make(const HeadConfig& cfg, int stack_depth, int in_dim, Rng& init_rng);

  bool uses_adapter() const {
    return cfg.kind == HeadKind::AdapterMfa || cfg.kind == HeadKind::LoraAdapterMfa;
  }

  // Layer stack -> speaker embedding [embed_dim].
  Tensor embed(const LayerStack& stack) const;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  Index param_count() const;

  void save_into(Checkpoint& ckpt) const;
  static SpeakerHead load_from(const Checkpoint& ckpt);
};

// --- Standalone operations (the head building blocks) ------------------------

// Softmax(layer_w)-weighted convex combination of the stack.
Tensor weighted_average(const LayerStack& stack, const Tensor& layer_w);

// Per-layer adapter application; output stack is (L+1) x [T x d'].
LayerStack adapt(const LayerStack& stack, const std::vector<AdapterLayerParams>& adapter);

// Attentive statistics pooling: concat(mu, sigma), sigma floored at
// sqrt(eps).
Tensor asp_pool(const Tensor& frames, const AspParams& asp, double eps = 1e-6);

// Channel-wise concat of the stack -> ASP -> linear embedding.
Tensor embed_mfa(const LayerStack& stack, const AspParams& asp, const LinearParams& emb);

}  // namespace svf
