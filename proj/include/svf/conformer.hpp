// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Conformer encoder emitting the per-layer feature stack, with LoRA slots
// on the attention query/value projections and multiplicative gate hooks
// on attention heads, FFN units and conv channels (the structures the
// pruner operates on).
//
// Layer layout (macaron, pre-norm):
//   x += 0.5 * FFN1(LN(x)); x += MHSA(LN(x)); x += Conv(LN(x));
//   x += 0.5 * FFN2(LN(x)); return LN_out(x)
// Input projection: frame pairs are stacked (2x temporal subsampling) and
// mapped linearly to the model dimension; its output is layer 0 of the
// stack.
//
// Feature matrices are frames x channels throughout.
//
// Threading: a model is single-writer during training steps; eval forwards
// may run concurrently on clones.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svf/checkpoint.hpp"
#include "svf/ops.hpp"
#include "svf/rng.hpp"
#include "svf/tensor.hpp"

namespace svf {

struct ConformerConfig {
  int num_layers = 4;
  int model_dim = 64;
  int ffn_dim = 256;
  int num_heads = 4;
  int conv_kernel = 15;  // odd
  int rel_bias_radius = 64;
  double dropout_rate = 0.1;
  int input_dim = 80;

  int head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

// Ordered per-layer features h_0..h_L, all [T x D].
struct LayerStack {
  std::vector<Tensor> h;

  Index depth() const { return static_cast<Index>(h.size()); }
  Index frames() const { return h.empty() ? 0 : h[0].rows(); }
  Index channels() const { return h.empty() ? 0 : h[0].cols(); }
};

struct LinearParams {
  Tensor W;  // [in x out]
  Tensor b;  // [out]
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct LoraAdapter {
  Tensor A;  // [in x r]
  Tensor B;  // [r x out]
  int rank = 0;
  double alpha = 0.0;
  double scale() const { return alpha / static_cast<double>(rank); }
};

enum class LoraTarget { Query, Value };

struct AttentionParams {
  LinearParams q, k, v, o;
  Tensor rel_bias;  // [num_heads x (2*radius+1)]
  int num_heads = 0;
  int head_dim = 0;
  std::optional<LoraAdapter> lora_q;
  std::optional<LoraAdapter> lora_v;
};

struct FfnParams {
  LinearParams in;   // [D x hidden]
  LinearParams out;  // [hidden x D]; out.b survives even a fully-pruned block
  int hidden = 0;
};

struct ConvParams {
  LinearParams pw1;  // [D x 2*channels]
  Tensor dw_kernel;  // [kernel x channels]
  Tensor dw_bias;    // [channels]
  LinearParams pw2;  // [channels x D]; pw2.b survives full pruning
  int kernel = 0;
  int channels = 0;
};

// Gate value vectors for one layer; invalid tensors mean "ungated".
struct LayerGates {
  Tensor head;  // [num_heads]
  Tensor ffn1;  // [ffn1 hidden]
  Tensor ffn2;  // [ffn2 hidden]
  Tensor conv;  // [conv channels]
};

struct GateTensors {
  std::vector<LayerGates> layers;
};

enum class RunMode { Train, Eval };

struct ConformerLayer {
  LayerNormParams ln_ffn1, ln_mhsa, ln_conv, ln_ffn2, ln_out;
  FfnParams ffn1, ffn2;
  AttentionParams attn;
  ConvParams conv;

  Tensor forward(const Tensor& x, RunMode mode, double dropout_rate, Rng* dropout_rng,
                 const LayerGates* gates) const;
};

class ConformerModel {
 public:
  ConformerModel() = default;
  ConformerModel(const ConformerConfig& cfg, Rng init_rng);

  const ConformerConfig& config() const { return cfg_; }
  std::vector<ConformerLayer>& layers() { return layers_; }
  const std::vector<ConformerLayer>& layers() const { return layers_; }
  LinearParams& input_proj() { return input_proj_; }

  // feats is [T_in x input_dim]; the stack has num_layers+1 entries of
  // [T_in/2 x model_dim]. Fails if fewer than 2 input frames remain.
  LayerStack encode(const Tensor& feats, RunMode mode, const GateTensors* gates = nullptr,
                    Rng* dropout_rng = nullptr) const;

  // LoRA on a layer's query or value projection: A random small, B zero,
  // base weight frozen while the slot is active. Duplicate attachment on
  // the same slot is a contract error.
  void attach_lora(int layer_index, LoraTarget target, int rank, double alpha, Rng& init_rng);
  // Folds every slot into its base weight (W += (alpha/r) A B) and removes
  // it; a no-op (with a stderr note) when nothing is attached.
  void merge_lora();
  bool has_lora() const;

  // Parameters in stable order; encoder under "enc.", LoRA under "lora.".
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  Index param_count() const;
  // FNV-1a over raw parameter bytes in name order.
  std::uint64_t checksum() const;

  ConformerModel clone() const;

  void save_into(Checkpoint& ckpt) const;
  static ConformerModel load_from(const Checkpoint& ckpt);

 private:
  ConformerConfig cfg_;
  LinearParams input_proj_;
  std::vector<ConformerLayer> layers_;
};

// y = x W + b (+ LoRA path when attached).
Tensor linear(const Tensor& x, const LinearParams& p);

}  // namespace svf
