// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/heads.hpp"

#include <cmath>

namespace svf {

namespace {

constexpr double kAspEps = 1e-6;
constexpr double kLnEps = 1e-5;

Tensor make_weight(Index in, Index out, Rng& rng) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
}

LinearParams make_linear(Index in, Index out, Rng& rng) {
  return LinearParams{make_weight(in, out, rng), Tensor::zeros({out}, true)};
}

}  // namespace

const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::WeightedAvg: return "weighted_avg";
    case HeadKind::Mfa: return "mfa";
    case HeadKind::AdapterMfa: return "adapter_mfa";
    case HeadKind::LoraAdapterMfa: return "lora_adapter_mfa";
  }
  return "?";
}

HeadKind head_kind_from_name(const std::string& name) {
  if (name == "weighted_avg") return HeadKind::WeightedAvg;
  if (name == "mfa") return HeadKind::Mfa;
  if (name == "adapter_mfa") return HeadKind::AdapterMfa;
  if (name == "lora_adapter_mfa") return HeadKind::LoraAdapterMfa;
  throw ConfigError("unknown head kind \"" + name + "\"");
}

Tensor weighted_average(const LayerStack& stack, const Tensor& layer_w) {
  if (layer_w.size() != stack.depth()) {
    throw StructuralError("weighted_average: " + std::to_string(layer_w.size()) +
                          " weights for a stack of depth " + std::to_string(stack.depth()));
  }
  Tensor w = softmax(layer_w, 0);
  Tensor acc;
  for (Index i = 0; i < stack.depth(); ++i) {
    Tensor term = mul(stack.h[static_cast<std::size_t>(i)], slice(w, 0, i, 1));
    acc = (i == 0) ? term : add(acc, term);
  }
  return acc;
}

LayerStack adapt(const LayerStack& stack, const std::vector<AdapterLayerParams>& adapter) {
  if (adapter.size() != static_cast<std::size_t>(stack.depth())) {
    throw StructuralError("adapt: " + std::to_string(adapter.size()) +
                          " adapters for a stack of depth " + std::to_string(stack.depth()));
  }
  LayerStack out;
  out.h.reserve(adapter.size());
  for (std::size_t i = 0; i < adapter.size(); ++i) {
    const AdapterLayerParams& a = adapter[i];
    Tensor h = linear(stack.h[i], a.lin1);
    h = layer_norm(h, a.ln.gain, a.ln.bias, kLnEps);
    h = relu(h);
    out.h.push_back(linear(h, a.lin2));
  }
  return out;
}

Tensor asp_pool(const Tensor& frames, const AspParams& asp, double eps) {
  if (frames.rank() != 2 || frames.rows() < 1) {
    throw ShapeError("asp_pool: expected a [T x C] frame matrix, got " +
                     shape_str(frames.shape()));
  }
  const Index c = frames.cols();
  const Index hid = asp.att.W.cols();
  Tensor pre = svf::tanh(linear(frames, asp.att));             // [T x hid]
  Tensor logits = matmul(pre, reshape(asp.v, {hid, 1}));       // [T x 1]
  Tensor alpha = softmax(logits, 0);                           // [T x 1]
  Tensor xt = transpose(frames);                               // [C x T]
  Tensor mu = matmul(xt, alpha);                               // [C x 1]
  Tensor m2 = matmul(transpose(mul(frames, frames)), alpha);   // [C x 1]
  Tensor sigma = svf::sqrt(clamp_min(sub(m2, mul(mu, mu)), eps));
  return reshape(concat({mu, sigma}, 0), {2 * c});
}

Tensor embed_mfa(const LayerStack& stack, const AspParams& asp, const LinearParams& emb) {
  if (stack.h.empty()) throw StructuralError("embed_mfa: empty stack");
  for (const Tensor& h : stack.h) {
    if (h.rows() != stack.frames() || h.cols() != stack.channels()) {
      throw StructuralError("embed_mfa: ragged stack, " + shape_str(h.shape()) + " vs " +
                            shape_str(stack.h[0].shape()));
    }
  }
  Tensor cat = (stack.h.size() == 1) ? stack.h[0] : concat(stack.h, 1);
  Tensor pooled = asp_pool(cat, asp, kAspEps);
  return reshape(linear(reshape(pooled, {1, pooled.size()}), emb), {emb.W.cols()});
}

SpeakerHead SpeakerHead::make(const HeadConfig& cfg, int stack_depth, int in_dim, Rng& init_rng) {
  SpeakerHead head;
  head.cfg = cfg;
  head.stack_depth = stack_depth;
  head.in_dim = in_dim;
  Rng rng = init_rng.split("head");

  if (cfg.kind == HeadKind::WeightedAvg) {
    const Index c = cfg.ecapa_channels;
    head.layer_w = Tensor::zeros({stack_depth}, true);
    head.ecapa_in = make_linear(in_dim, c, rng);
    const int dilations[3] = {1, 2, 3};
    for (int bi = 0; bi < 3; ++bi) {
      ConvBlockParams block;
      block.dilation = dilations[bi];
      for (int t = 0; t < 3; ++t) {
        block.taps.push_back(make_weight(c, c, rng));
      }
      block.bias = Tensor::zeros({c}, true);
      block.ln = LayerNormParams{Tensor::ones({c}, true), Tensor::zeros({c}, true)};
      head.blocks.push_back(std::move(block));
    }
    const Index hid = (cfg.asp_hidden > 0) ? cfg.asp_hidden : c;
    head.asp.att = make_linear(c, hid, rng);
    head.asp.v = Tensor::randn({hid}, rng, 1.0 / std::sqrt(static_cast<double>(hid)), true);
    head.emb = make_linear(2 * c, cfg.embed_dim, rng);
    return head;
  }

  Index feat_dim = in_dim;
  if (head.uses_adapter()) {
    feat_dim = cfg.adapter_dim;
    for (int i = 0; i < stack_depth; ++i) {
      AdapterLayerParams a;
      a.lin1 = make_linear(in_dim, cfg.adapter_dim, rng);
      a.ln = LayerNormParams{Tensor::ones({cfg.adapter_dim}, true),
                             Tensor::zeros({cfg.adapter_dim}, true)};
      a.lin2 = make_linear(cfg.adapter_dim, cfg.adapter_dim, rng);
      head.adapter.push_back(std::move(a));
    }
  }
  const Index cat_dim = static_cast<Index>(stack_depth) * feat_dim;
  const Index hid = (cfg.asp_hidden > 0) ? cfg.asp_hidden
                    : head.uses_adapter() ? cfg.adapter_dim
                                          : in_dim;
  head.asp.att = make_linear(cat_dim, hid, rng);
  head.asp.v = Tensor::randn({hid}, rng, 1.0 / std::sqrt(static_cast<double>(hid)), true);
  head.emb = make_linear(2 * cat_dim, cfg.embed_dim, rng);
  return head;
}

namespace {

// Kernel-3 dilated convolution over time with residual:
// x + relu(LN(sum_j shift(x, d*(j-1)) W_j + b)).
Tensor conv_block_forward(const Tensor& x, const ConvBlockParams& block) {
  Tensor acc;
  for (int j = 0; j < 3; ++j) {
    const Index offset = static_cast<Index>(block.dilation) * (j - 1);
    Tensor shifted = (offset == 0) ? x : shift_rows(x, offset);
    Tensor term = matmul(shifted, block.taps[static_cast<std::size_t>(j)]);
    acc = (j == 0) ? term : add(acc, term);
  }
  acc = add(acc, block.bias);
  acc = relu(layer_norm(acc, block.ln.gain, block.ln.bias, kLnEps));
  return add(x, acc);
}

}  // namespace

Tensor SpeakerHead::embed(const LayerStack& stack) const {
  if (stack.depth() != stack_depth) {
    throw StructuralError("head: stack depth " + std::to_string(stack.depth()) +
                          " does not match configured " + std::to_string(stack_depth));
  }
  if (cfg.kind == HeadKind::WeightedAvg) {
    Tensor h = weighted_average(stack, layer_w);
    h = linear(h, ecapa_in);
    for (const auto& block : blocks) h = conv_block_forward(h, block);
    Tensor pooled = asp_pool(h, asp, kAspEps);
    return reshape(linear(reshape(pooled, {1, pooled.size()}), emb), {emb.W.cols()});
  }
  if (uses_adapter()) {
    return embed_mfa(adapt(stack, adapter), asp, emb);
  }
  return embed_mfa(stack, asp, emb);
}

std::vector<std::pair<std::string, Tensor>> SpeakerHead::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto add_linear = [&](const std::string& prefix, const LinearParams& p) {
    out.emplace_back(prefix + ".W", p.W);
    out.emplace_back(prefix + ".b", p.b);
  };
  if (cfg.kind == HeadKind::WeightedAvg) {
    out.emplace_back("head.layer_w", layer_w);
    add_linear("head.ecapa.in", ecapa_in);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string bp = "head.ecapa.block" + std::to_string(i);
      for (std::size_t j = 0; j < blocks[i].taps.size(); ++j) {
        out.emplace_back(bp + ".tap" + std::to_string(j), blocks[i].taps[j]);
      }
      out.emplace_back(bp + ".b", blocks[i].bias);
      out.emplace_back(bp + ".ln.gain", blocks[i].ln.gain);
      out.emplace_back(bp + ".ln.bias", blocks[i].ln.bias);
    }
  }
  for (std::size_t i = 0; i < adapter.size(); ++i) {
    const std::string ap = "head.adapter" + std::to_string(i);
    add_linear(ap + ".lin1", adapter[i].lin1);
    out.emplace_back(ap + ".ln.gain", adapter[i].ln.gain);
    out.emplace_back(ap + ".ln.bias", adapter[i].ln.bias);
    add_linear(ap + ".lin2", adapter[i].lin2);
  }
  add_linear("head.asp.att", asp.att);
  out.emplace_back("head.asp.v", asp.v);
  add_linear("head.emb", emb);
  return out;
}

Index SpeakerHead::param_count() const {
  Index n = 0;
  for (const auto& [name, t] : named_params()) n += t.size();
  return n;
}

void SpeakerHead::save_into(Checkpoint& ckpt) const {
  ckpt.put_vector("meta.head",
                  {static_cast<double>(static_cast<int>(cfg.kind)),
                   static_cast<double>(cfg.embed_dim), static_cast<double>(cfg.adapter_dim),
                   static_cast<double>(cfg.asp_hidden), static_cast<double>(cfg.ecapa_channels),
                   static_cast<double>(cfg.lora_rank), cfg.lora_alpha,
                   static_cast<double>(stack_depth), static_cast<double>(in_dim)});
  for (const auto& [name, t] : named_params()) ckpt.put(name, t);
}

SpeakerHead SpeakerHead::load_from(const Checkpoint& ckpt) {
  const TensorEntry& meta = ckpt.get("meta.head");
  if (meta.data.size() != 9) throw IoError("checkpoint: bad meta.head entry");
  SpeakerHead head;
  head.cfg.kind = static_cast<HeadKind>(static_cast<int>(meta.data[0]));
  head.cfg.embed_dim = static_cast<int>(meta.data[1]);
  head.cfg.adapter_dim = static_cast<int>(meta.data[2]);
  head.cfg.asp_hidden = static_cast<int>(meta.data[3]);
  head.cfg.ecapa_channels = static_cast<int>(meta.data[4]);
  head.cfg.lora_rank = static_cast<int>(meta.data[5]);
  head.cfg.lora_alpha = meta.data[6];
  head.stack_depth = static_cast<int>(meta.data[7]);
  head.in_dim = static_cast<int>(meta.data[8]);

  auto load_linear = [&](const std::string& prefix, LinearParams& p) {
    p.W = ckpt.get_tensor(prefix + ".W", true);
    p.b = ckpt.get_tensor(prefix + ".b", true);
  };
  if (head.cfg.kind == HeadKind::WeightedAvg) {
    head.layer_w = ckpt.get_tensor("head.layer_w", true);
    load_linear("head.ecapa.in", head.ecapa_in);
    const int dilations[3] = {1, 2, 3};
    for (int i = 0; i < 3; ++i) {
      ConvBlockParams block;
      block.dilation = dilations[i];
      const std::string bp = "head.ecapa.block" + std::to_string(i);
      for (int j = 0; j < 3; ++j) {
        block.taps.push_back(ckpt.get_tensor(bp + ".tap" + std::to_string(j), true));
      }
      block.bias = ckpt.get_tensor(bp + ".b", true);
      block.ln.gain = ckpt.get_tensor(bp + ".ln.gain", true);
      block.ln.bias = ckpt.get_tensor(bp + ".ln.bias", true);
      head.blocks.push_back(std::move(block));
    }
  }
  if (head.uses_adapter()) {
    for (int i = 0; i < head.stack_depth; ++i) {
      AdapterLayerParams a;
      const std::string ap = "head.adapter" + std::to_string(i);
      load_linear(ap + ".lin1", a.lin1);
      a.ln.gain = ckpt.get_tensor(ap + ".ln.gain", true);
      a.ln.bias = ckpt.get_tensor(ap + ".ln.bias", true);
      load_linear(ap + ".lin2", a.lin2);
      head.adapter.push_back(std::move(a));
    }
  }
  load_linear("head.asp.att", head.asp.att);
  head.asp.v = ckpt.get_tensor("head.asp.v", true);
  load_linear("head.emb", head.emb);
  return head;
}

}  // namespace svf
