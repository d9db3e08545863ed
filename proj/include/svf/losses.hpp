// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Training losses: ArcFace classification for the speaker stages and the
// layer-wise L1-minus-cosine distillation loss used by pruning.

#pragma once

#include <vector>

#include "svf/conformer.hpp"
#include "svf/ops.hpp"

namespace svf {

struct ArcFaceParams {
  Tensor W;  // [num_classes x embed_dim]; rows are re-normalized every forward
  double margin = 0.2;  // additive angle, radians
  double scale = 32.0;
};

ArcFaceParams make_arcface(int num_classes, int embed_dim, Rng& init_rng);

// Scaled-cosine cross-entropy with an additive angular margin on the true
// class. The margin falls back to cos(theta) - m*sin(m) when theta + m
// would pass pi. Embeddings may be [B x d] or a single [d].
Tensor arcface_loss(const Tensor& embeddings, const std::vector<int>& labels,
                    const ArcFaceParams& params);

struct DistillConfig {
  bool mean_l1 = true;  // per-frame L1 normalized over channels (sum if false)
  double cosine_eps = 1e-8;
};

// sum_l sum_t ( L1(h_l^t, h'_l^t) - cosine(h_l^t, h'_l^t) ).
// Identical stacks give exactly -(L+1)*T.
Tensor distill_loss(const LayerStack& teacher, const LayerStack& student,
                    const DistillConfig& cfg = DistillConfig());

}  // namespace svf
