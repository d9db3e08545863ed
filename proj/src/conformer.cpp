// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/conformer.hpp"

#include <cmath>
#include <cstdio>

namespace svf {

namespace {

constexpr double kLnEps = 1e-5;

Tensor make_weight(Index in, Index out, Rng& rng) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
}

LinearParams make_linear(Index in, Index out, Rng& rng) {
  return LinearParams{make_weight(in, out, rng), Tensor::zeros({out}, true)};
}

LayerNormParams make_ln(Index d) {
  return LayerNormParams{Tensor::ones({d}, true), Tensor::zeros({d}, true)};
}

Tensor apply_ln(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, p.gain, p.bias, kLnEps);
}

Tensor maybe_dropout(const Tensor& x, RunMode mode, double rate, Rng* rng) {
  if (mode == RunMode::Train && rate > 0.0 && rng != nullptr) return dropout(x, rate, *rng);
  return x;
}

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

void ConformerConfig::validate() const {
  if (num_layers < 1 || model_dim < 1 || ffn_dim < 1 || num_heads < 1 || input_dim < 1) {
    throw ConfigError("conformer: all dimensions must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw ConfigError("conformer: num_heads must divide model_dim");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("conformer: conv_kernel must be odd and positive");
  }
  if (rel_bias_radius < 1) throw ConfigError("conformer: rel_bias_radius must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("conformer: dropout_rate must be in [0, 1)");
  }
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  return add(matmul(x, p.W), p.b);
}

// ---------------------------------------------------------------------------
// layer forward
// ---------------------------------------------------------------------------

namespace {

Tensor ffn_forward(const Tensor& x, const FfnParams& ffn, const Tensor* gate) {
  if (ffn.hidden == 0) {
    // Fully pruned block: only the output bias remains.
    Tensor zeros = mul_scalar(x, 0.0);
    return add(zeros, ffn.out.b);
  }
  Tensor h = swish(linear(x, ffn.in));
  if (gate != nullptr && gate->valid()) h = mul(h, *gate);
  return linear(h, ffn.out);
}

Tensor lora_path(const Tensor& x, const LoraAdapter& lora) {
  return mul_scalar(matmul(matmul(x, lora.A), lora.B), lora.scale());
}

Tensor mhsa_forward(const Tensor& x, const AttentionParams& attn, const Tensor* gate) {
  Tensor q = linear(x, attn.q);
  if (attn.lora_q) q = add(q, lora_path(x, *attn.lora_q));
  Tensor k = linear(x, attn.k);
  Tensor v = linear(x, attn.v);
  if (attn.lora_v) v = add(v, lora_path(x, *attn.lora_v));

  const Index hd = attn.head_dim;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(attn.num_heads));
  for (int h = 0; h < attn.num_heads; ++h) {
    Tensor qh = slice(q, 1, h * hd, hd);
    Tensor kh = slice(k, 1, h * hd, hd);
    Tensor vh = slice(v, 1, h * hd, hd);
    Tensor scores = mul_scalar(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor bias_h = Tensor(slice(attn.rel_bias, 0, h, 1));
    scores = rel_bias_add(scores, reshape(bias_h, {bias_h.cols()}));
    Tensor probs = softmax(scores, 1);
    Tensor oh = matmul(probs, vh);
    if (gate != nullptr && gate->valid()) {
      oh = mul(oh, slice(*gate, 0, h, 1));
    }
    heads.push_back(oh);
  }
  Tensor cat = (heads.size() == 1) ? heads[0] : concat(heads, 1);
  return linear(cat, attn.o);
}

Tensor conv_forward(const Tensor& x, const ConvParams& conv, const Tensor* gate) {
  if (conv.channels == 0) {
    Tensor zeros = mul_scalar(x, 0.0);
    return add(zeros, conv.pw2.b);
  }
  Tensor p = linear(x, conv.pw1);
  Tensor g = glu(p, 1);
  Tensor d = depthwise_conv1d(g, conv.dw_kernel, conv.dw_bias);
  Tensor s = swish(d);
  if (gate != nullptr && gate->valid()) s = mul(s, *gate);
  return linear(s, conv.pw2);
}

}  // namespace

Tensor ConformerLayer::forward(const Tensor& x, RunMode mode, double dropout_rate,
                               Rng* dropout_rng, const LayerGates* gates) const {
  const Tensor* g_ffn1 = gates ? &gates->ffn1 : nullptr;
  const Tensor* g_ffn2 = gates ? &gates->ffn2 : nullptr;
  const Tensor* g_head = gates ? &gates->head : nullptr;
  const Tensor* g_conv = gates ? &gates->conv : nullptr;

  Tensor y = add(x, mul_scalar(maybe_dropout(ffn_forward(apply_ln(x, ln_ffn1), ffn1, g_ffn1),
                                             mode, dropout_rate, dropout_rng),
                               0.5));
  y = add(y, maybe_dropout(mhsa_forward(apply_ln(y, ln_mhsa), attn, g_head), mode, dropout_rate,
                           dropout_rng));
  y = add(y, maybe_dropout(conv_forward(apply_ln(y, ln_conv), conv, g_conv), mode, dropout_rate,
                           dropout_rng));
  y = add(y, mul_scalar(maybe_dropout(ffn_forward(apply_ln(y, ln_ffn2), ffn2, g_ffn2), mode,
                                      dropout_rate, dropout_rng),
                        0.5));
  return apply_ln(y, ln_out);
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

ConformerModel::ConformerModel(const ConformerConfig& cfg, Rng init_rng) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = init_rng.split("conformer");
  const Index d = cfg.model_dim;
  input_proj_ = make_linear(2 * cfg.input_dim, d, rng);
  layers_.resize(static_cast<std::size_t>(cfg.num_layers));
  for (int i = 0; i < cfg.num_layers; ++i) {
    ConformerLayer& L = layers_[static_cast<std::size_t>(i)];
    L.ln_ffn1 = make_ln(d);
    L.ln_mhsa = make_ln(d);
    L.ln_conv = make_ln(d);
    L.ln_ffn2 = make_ln(d);
    L.ln_out = make_ln(d);
    L.ffn1 = FfnParams{make_linear(d, cfg.ffn_dim, rng), make_linear(cfg.ffn_dim, d, rng),
                       cfg.ffn_dim};
    L.ffn2 = FfnParams{make_linear(d, cfg.ffn_dim, rng), make_linear(cfg.ffn_dim, d, rng),
                       cfg.ffn_dim};
    L.attn.q = make_linear(d, d, rng);
    L.attn.k = make_linear(d, d, rng);
    L.attn.v = make_linear(d, d, rng);
    L.attn.o = make_linear(d, d, rng);
    L.attn.rel_bias = Tensor::zeros({cfg.num_heads, 2 * cfg.rel_bias_radius + 1}, true);
    L.attn.num_heads = cfg.num_heads;
    L.attn.head_dim = cfg.head_dim();
    L.conv.pw1 = make_linear(d, 2 * d, rng);
    L.conv.dw_kernel = Tensor::randn({cfg.conv_kernel, d}, rng,
                                     1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel)), true);
    L.conv.dw_bias = Tensor::zeros({d}, true);
    L.conv.pw2 = make_linear(d, d, rng);
    L.conv.kernel = cfg.conv_kernel;
    L.conv.channels = static_cast<int>(d);
  }
}

LayerStack ConformerModel::encode(const Tensor& feats, RunMode mode, const GateTensors* gates,
                                  Rng* dropout_rng) const {
  if (feats.rank() != 2 || feats.cols() != cfg_.input_dim) {
    throw ShapeError("encode: expected [T x " + std::to_string(cfg_.input_dim) + "] features, got " +
                     shape_str(feats.shape()));
  }
  const Index t_sub = feats.rows() / 2;
  if (t_sub < 1) {
    throw ShapeError("encode: " + std::to_string(feats.rows()) +
                     " frames leave no output after 2x subsampling");
  }
  if (gates != nullptr && gates->layers.size() != layers_.size()) {
    throw StructuralError("encode: gate layout has " + std::to_string(gates->layers.size()) +
                          " layers, model has " + std::to_string(layers_.size()));
  }
  // Stack frame pairs, then project.
  Tensor pairs = reshape(slice(feats, 0, 0, 2 * t_sub), {t_sub, 2 * cfg_.input_dim});
  Tensor h = linear(pairs, input_proj_);

  LayerStack stack;
  stack.h.reserve(layers_.size() + 1);
  stack.h.push_back(h);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerGates* lg = gates ? &gates->layers[i] : nullptr;
    h = layers_[i].forward(h, mode, cfg_.dropout_rate, dropout_rng, lg);
    stack.h.push_back(h);
  }
  return stack;
}

void ConformerModel::attach_lora(int layer_index, LoraTarget target, int rank, double alpha,
                                 Rng& init_rng) {
  if (layer_index < 0 || layer_index >= static_cast<int>(layers_.size())) {
    throw ContractError("attach_lora: layer index out of range");
  }
  if (rank < 1) throw ContractError("attach_lora: rank must be >= 1");
  AttentionParams& attn = layers_[static_cast<std::size_t>(layer_index)].attn;
  LinearParams& base = (target == LoraTarget::Query) ? attn.q : attn.v;
  std::optional<LoraAdapter>& slot = (target == LoraTarget::Query) ? attn.lora_q : attn.lora_v;
  if (slot.has_value()) {
    throw ContractError("attach_lora: slot already attached on layer " +
                        std::to_string(layer_index));
  }
  LoraAdapter lora;
  lora.rank = rank;
  lora.alpha = alpha;
  lora.A = Tensor::randn({base.W.rows(), rank}, init_rng, 0.01, true);
  lora.B = Tensor::zeros({rank, base.W.cols()}, true);
  slot = std::move(lora);
  base.W.set_requires_grad(false);
}

void ConformerModel::merge_lora() {
  if (!has_lora()) {
    std::fprintf(stderr, "svforge: merge_lora called with no LoRA slots attached; no-op\n");
    return;
  }
  for (auto& layer : layers_) {
    for (auto target : {LoraTarget::Query, LoraTarget::Value}) {
      AttentionParams& attn = layer.attn;
      LinearParams& base = (target == LoraTarget::Query) ? attn.q : attn.v;
      std::optional<LoraAdapter>& slot = (target == LoraTarget::Query) ? attn.lora_q : attn.lora_v;
      if (!slot) continue;
      MatrixRM delta = slot->A.mat() * slot->B.mat();
      MatMap(base.W.mutable_value().data(), base.W.rows(), base.W.cols()) +=
          slot->scale() * delta;
      base.W.set_requires_grad(true);
      slot.reset();
    }
  }
}

bool ConformerModel::has_lora() const {
  for (const auto& layer : layers_) {
    if (layer.attn.lora_q || layer.attn.lora_v) return true;
  }
  return false;
}

std::vector<std::pair<std::string, Tensor>> ConformerModel::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_linear = [&](const std::string& prefix, const LinearParams& p) {
    if (p.W.valid()) out.emplace_back(prefix + ".W", p.W);
    if (p.b.valid()) out.emplace_back(prefix + ".b", p.b);
  };
  add_linear("enc.input_proj", input_proj_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string lp = "enc.layer" + std::to_string(i);
    const ConformerLayer& L = layers_[i];
    auto add_ln = [&](const std::string& name, const LayerNormParams& p) {
      out.emplace_back(lp + "." + name + ".gain", p.gain);
      out.emplace_back(lp + "." + name + ".bias", p.bias);
    };
    add_ln("ln_ffn1", L.ln_ffn1);
    add_linear(lp + ".ffn1.in", L.ffn1.in);
    add_linear(lp + ".ffn1.out", L.ffn1.out);
    add_ln("ln_mhsa", L.ln_mhsa);
    add_linear(lp + ".attn.q", L.attn.q);
    add_linear(lp + ".attn.k", L.attn.k);
    add_linear(lp + ".attn.v", L.attn.v);
    add_linear(lp + ".attn.o", L.attn.o);
    out.emplace_back(lp + ".attn.rel_bias", L.attn.rel_bias);
    add_ln("ln_conv", L.ln_conv);
    add_linear(lp + ".conv.pw1", L.conv.pw1);
    if (L.conv.dw_kernel.valid()) out.emplace_back(lp + ".conv.dw.K", L.conv.dw_kernel);
    if (L.conv.dw_bias.valid()) out.emplace_back(lp + ".conv.dw.b", L.conv.dw_bias);
    add_linear(lp + ".conv.pw2", L.conv.pw2);
    add_ln("ln_ffn2", L.ln_ffn2);
    add_linear(lp + ".ffn2.in", L.ffn2.in);
    add_linear(lp + ".ffn2.out", L.ffn2.out);
    add_ln("ln_out", L.ln_out);
    if (L.attn.lora_q) {
      out.emplace_back("lora.layer" + std::to_string(i) + ".q.A", L.attn.lora_q->A);
      out.emplace_back("lora.layer" + std::to_string(i) + ".q.B", L.attn.lora_q->B);
    }
    if (L.attn.lora_v) {
      out.emplace_back("lora.layer" + std::to_string(i) + ".v.A", L.attn.lora_v->A);
      out.emplace_back("lora.layer" + std::to_string(i) + ".v.B", L.attn.lora_v->B);
    }
  }
  return out;
}

Index ConformerModel::param_count() const {
  Index n = 0;
  for (const auto& [name, t] : named_params()) n += t.size();
  return n;
}

std::uint64_t ConformerModel::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : named_params()) {
    fnv_bytes(h, name.data(), name.size());
    fnv_bytes(h, t.value().data(), static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  return h;
}

ConformerModel ConformerModel::clone() const {
  Checkpoint ckpt;
  save_into(ckpt);
  return load_from(ckpt);
}

void ConformerModel::save_into(Checkpoint& ckpt) const {
  ckpt.put_vector("meta.encoder",
                  {static_cast<double>(cfg_.num_layers), static_cast<double>(cfg_.model_dim),
                   static_cast<double>(cfg_.ffn_dim), static_cast<double>(cfg_.num_heads),
                   static_cast<double>(cfg_.conv_kernel), static_cast<double>(cfg_.rel_bias_radius),
                   cfg_.dropout_rate, static_cast<double>(cfg_.input_dim)});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const ConformerLayer& L = layers_[i];
    ckpt.put_vector("meta.layer" + std::to_string(i) + ".dims",
                    {static_cast<double>(L.attn.num_heads), static_cast<double>(L.ffn1.hidden),
                     static_cast<double>(L.ffn2.hidden), static_cast<double>(L.conv.channels)});
  }
  for (const auto& [name, t] : named_params()) ckpt.put(name, t);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const AttentionParams& attn = layers_[i].attn;
    if (attn.lora_q) {
      ckpt.put_vector("meta.lora.layer" + std::to_string(i) + ".q",
                      {static_cast<double>(attn.lora_q->rank), attn.lora_q->alpha});
    }
    if (attn.lora_v) {
      ckpt.put_vector("meta.lora.layer" + std::to_string(i) + ".v",
                      {static_cast<double>(attn.lora_v->rank), attn.lora_v->alpha});
    }
  }
}

ConformerModel ConformerModel::load_from(const Checkpoint& ckpt) {
  const TensorEntry& meta = ckpt.get("meta.encoder");
  if (meta.data.size() != 8) throw IoError("checkpoint: bad meta.encoder entry");
  ConformerModel m;
  m.cfg_.num_layers = static_cast<int>(meta.data[0]);
  m.cfg_.model_dim = static_cast<int>(meta.data[1]);
  m.cfg_.ffn_dim = static_cast<int>(meta.data[2]);
  m.cfg_.num_heads = static_cast<int>(meta.data[3]);
  m.cfg_.conv_kernel = static_cast<int>(meta.data[4]);
  m.cfg_.rel_bias_radius = static_cast<int>(meta.data[5]);
  m.cfg_.dropout_rate = meta.data[6];
  m.cfg_.input_dim = static_cast<int>(meta.data[7]);

  auto load_linear = [&](const std::string& prefix, LinearParams& p, bool required) {
    if (!required && !ckpt.has(prefix + ".W")) {
      p = LinearParams{};
      return;
    }
    p.W = ckpt.get_tensor(prefix + ".W", true);
    p.b = ckpt.get_tensor(prefix + ".b", true);
  };
  load_linear("enc.input_proj", m.input_proj_, true);
  m.layers_.resize(static_cast<std::size_t>(m.cfg_.num_layers));
  for (int i = 0; i < m.cfg_.num_layers; ++i) {
    ConformerLayer& L = m.layers_[static_cast<std::size_t>(i)];
    const std::string lp = "enc.layer" + std::to_string(i);
    const TensorEntry& dims = ckpt.get("meta.layer" + std::to_string(i) + ".dims");
    L.attn.num_heads = static_cast<int>(dims.data[0]);
    L.ffn1.hidden = static_cast<int>(dims.data[1]);
    L.ffn2.hidden = static_cast<int>(dims.data[2]);
    L.conv.channels = static_cast<int>(dims.data[3]);
    L.conv.kernel = m.cfg_.conv_kernel;
    L.attn.head_dim = m.cfg_.head_dim();

    auto load_ln = [&](const std::string& name, LayerNormParams& p) {
      p.gain = ckpt.get_tensor(lp + "." + name + ".gain", true);
      p.bias = ckpt.get_tensor(lp + "." + name + ".bias", true);
    };
    load_ln("ln_ffn1", L.ln_ffn1);
    load_linear(lp + ".ffn1.in", L.ffn1.in, false);
    load_linear(lp + ".ffn1.out", L.ffn1.out, false);
    if (!L.ffn1.out.b.valid()) L.ffn1.out.b = ckpt.get_tensor(lp + ".ffn1.out.b", true);
    load_ln("ln_mhsa", L.ln_mhsa);
    load_linear(lp + ".attn.q", L.attn.q, true);
    load_linear(lp + ".attn.k", L.attn.k, true);
    load_linear(lp + ".attn.v", L.attn.v, true);
    load_linear(lp + ".attn.o", L.attn.o, true);
    L.attn.rel_bias = ckpt.get_tensor(lp + ".attn.rel_bias", true);
    load_ln("ln_conv", L.ln_conv);
    load_linear(lp + ".conv.pw1", L.conv.pw1, false);
    if (ckpt.has(lp + ".conv.dw.K")) {
      L.conv.dw_kernel = ckpt.get_tensor(lp + ".conv.dw.K", true);
      L.conv.dw_bias = ckpt.get_tensor(lp + ".conv.dw.b", true);
    }
    load_linear(lp + ".conv.pw2", L.conv.pw2, false);
    if (!L.conv.pw2.b.valid()) L.conv.pw2.b = ckpt.get_tensor(lp + ".conv.pw2.b", true);
    load_ln("ln_ffn2", L.ln_ffn2);
    load_linear(lp + ".ffn2.in", L.ffn2.in, false);
    load_linear(lp + ".ffn2.out", L.ffn2.out, false);
    if (!L.ffn2.out.b.valid()) L.ffn2.out.b = ckpt.get_tensor(lp + ".ffn2.out.b", true);
    load_ln("ln_out", L.ln_out);

    const std::string lq = "lora.layer" + std::to_string(i);
    if (ckpt.has(lq + ".q.A")) {
      const TensorEntry& lmeta = ckpt.get("meta.lora.layer" + std::to_string(i) + ".q");
      LoraAdapter lora;
      lora.rank = static_cast<int>(lmeta.data[0]);
      lora.alpha = lmeta.data[1];
      lora.A = ckpt.get_tensor(lq + ".q.A", true);
      lora.B = ckpt.get_tensor(lq + ".q.B", true);
      L.attn.lora_q = std::move(lora);
      L.attn.q.W.set_requires_grad(false);
    }
    if (ckpt.has(lq + ".v.A")) {
      const TensorEntry& lmeta = ckpt.get("meta.lora.layer" + std::to_string(i) + ".v");
      LoraAdapter lora;
      lora.rank = static_cast<int>(lmeta.data[0]);
      lora.alpha = lmeta.data[1];
      lora.A = ckpt.get_tensor(lq + ".v.A", true);
      lora.B = ckpt.get_tensor(lq + ".v.B", true);
      L.attn.lora_v = std::move(lora);
      L.attn.v.W.set_requires_grad(false);
    }
  }
  return m;
}

}  // namespace svf
