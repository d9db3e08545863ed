// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/losses.hpp"

#include <cmath>

namespace svf {

ArcFaceParams make_arcface(int num_classes, int embed_dim, Rng& init_rng) {
  Rng rng = init_rng.split("arcface");
  ArcFaceParams p;
  p.W = Tensor::randn({num_classes, embed_dim}, rng,
                      1.0 / std::sqrt(static_cast<double>(embed_dim)), true);
  return p;
}

Tensor arcface_loss(const Tensor& embeddings, const std::vector<int>& labels,
                    const ArcFaceParams& params) {
  if (params.margin < 0.0 || params.margin > 0.6) {
    throw ContractError("arcface: margin must be in [0, 0.6]");
  }
  if (params.scale <= 0.0) throw ContractError("arcface: scale must be positive");
  Tensor emb = (embeddings.rank() == 1)
                   ? reshape(embeddings, {1, embeddings.size()})
                   : embeddings;
  const Index batch = emb.rows();
  const Index dim = emb.cols();
  const Index classes = params.W.rows();
  if (params.W.cols() != dim) {
    throw ShapeError("arcface: embedding dim " + std::to_string(dim) +
                     " does not match class matrix " + shape_str(params.W.shape()));
  }
  if (static_cast<Index>(labels.size()) != batch) {
    throw ShapeError("arcface: batch of " + std::to_string(batch) + " embeddings with " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || l >= classes) throw ContractError("arcface: label out of range");
  }

  // Norm guards on raw values before any graph math.
  for (Index i = 0; i < batch; ++i) {
    if (emb.mat().row(i).norm() < 1e-12) {
      throw NumericError("arcface: zero-norm embedding in batch row " + std::to_string(i));
    }
  }

  auto row_normalize = [](const Tensor& x) {
    Tensor sq = sum_axis(mul(x, x), 1);
    Tensor inv = div(Tensor::ones({x.rows()}), svf::sqrt(clamp_min(sq, 1e-24)));
    return scale_rows(x, inv);
  };
  Tensor emb_n = row_normalize(emb);
  Tensor w_n = row_normalize(params.W);
  Tensor cos = matmul(emb_n, transpose(w_n));  // [B x classes]

  Array onehot_v = Array::Zero(batch * classes);
  for (Index i = 0; i < batch; ++i) onehot_v[i * classes + labels[static_cast<std::size_t>(i)]] = 1.0;
  Tensor onehot = Tensor::from_flat({batch, classes}, onehot_v);
  Tensor anti = Tensor::from_flat({batch, classes}, 1.0 - onehot_v);

  Tensor cos_y = sum_axis(mul(cos, onehot), 1);  // [B]
  const double m = params.margin;
  Tensor modified;
  if (m == 0.0) {
    modified = cos_y;
  } else {
    Tensor sin_y = svf::sqrt(clamp_min(sub(Tensor::ones({batch}), mul(cos_y, cos_y)), 1e-24));
    Tensor phi = sub(mul_scalar(cos_y, std::cos(m)), mul_scalar(sin_y, std::sin(m)));
    // theta + m > pi guard: fall back to cos(theta) - m sin(m).
    const double threshold = std::cos(M_PI - m);
    Array mask_v(batch);
    for (Index i = 0; i < batch; ++i) mask_v[i] = (cos_y.value()[i] > threshold) ? 1.0 : 0.0;
    Tensor mask = Tensor::from_flat({batch}, mask_v);
    Tensor anti_mask = Tensor::from_flat({batch}, 1.0 - mask_v);
    Tensor fallback = add_scalar(cos_y, -m * std::sin(m));
    modified = add(mul(mask, phi), mul(anti_mask, fallback));
  }

  Tensor target_col = reshape(modified, {batch, 1});
  Tensor spread = matmul(target_col, Tensor::ones({1, classes}));
  Tensor logits = add(mul(cos, anti), mul(spread, onehot));
  Tensor scaled = mul_scalar(logits, params.scale);

  // Cross entropy with a constant max shift per row.
  Array row_max(batch);
  for (Index i = 0; i < batch; ++i) row_max[i] = scaled.mat().row(i).maxCoeff();
  Tensor neg_max = Tensor::from_flat({batch}, -row_max);
  Tensor max_c = Tensor::from_flat({batch}, row_max);
  Tensor shifted = add_rows(scaled, neg_max);
  Tensor lse = add(svf::log(sum_axis(svf::exp(shifted), 1)), max_c);
  Tensor target_logit = sum_axis(mul(scaled, onehot), 1);
  return mean(sub(lse, target_logit));
}

Tensor distill_loss(const LayerStack& teacher, const LayerStack& student,
                    const DistillConfig& cfg) {
  if (teacher.depth() != student.depth()) {
    throw StructuralError("distill: stack depths differ, " + std::to_string(teacher.depth()) +
                          " vs " + std::to_string(student.depth()));
  }
  if (teacher.depth() == 0) throw StructuralError("distill: empty stacks");
  Tensor total;
  for (Index l = 0; l < teacher.depth(); ++l) {
    const Tensor& t = teacher.h[static_cast<std::size_t>(l)];
    const Tensor& s = student.h[static_cast<std::size_t>(l)];
    if (t.shape() != s.shape()) {
      throw StructuralError("distill: layer " + std::to_string(l) + " shapes differ, " +
                            shape_str(t.shape()) + " vs " + shape_str(s.shape()));
    }
    Tensor l1 = l1_row_mean(t, s);  // [T]
    if (!cfg.mean_l1) l1 = mul_scalar(l1, static_cast<double>(t.cols()));
    Tensor cosine = cosine_rows(t, s, cfg.cosine_eps);
    Tensor term = sum(sub(l1, cosine));
    total = (l == 0) ? term : add(total, term);
  }
  return total;
}

}  // namespace svf
