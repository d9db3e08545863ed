// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Heads: weighted layer averaging, adapters, attentive statistics pooling,
// and the MFA / weighted embedding paths.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "svf/heads.hpp"

using namespace svf;

namespace {

LayerStack random_stack(Index depth, Index frames, Index dim, Rng& rng) {
  LayerStack s;
  for (Index l = 0; l < depth; ++l) {
    Array a(frames * dim);
    for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1.0, 1.0);
    s.h.push_back(Tensor::from_flat({frames, dim}, std::move(a)));
  }
  return s;
}

AspParams random_asp(Index channels, Index hidden, Rng& rng) {
  AspParams asp;
  asp.att.W = Tensor::randn({channels, hidden}, rng, 0.3);
  asp.att.b = Tensor::randn({hidden}, rng, 0.1);
  asp.v = Tensor::randn({hidden}, rng, 0.5);
  return asp;
}

}  // namespace

TEST_CASE("weighted average: uniform, saturated, oracle") {
  Rng rng(51);
  LayerStack stack = random_stack(4, 6, 5, rng);

  // Equal weights give the arithmetic mean.
  Tensor w0 = Tensor::zeros({4});
  Tensor mean_out = weighted_average(stack, w0);
  MatrixRM mean_ref = MatrixRM::Zero(6, 5);
  for (const auto& h : stack.h) mean_ref += MatrixRM(h.mat());
  mean_ref /= 4.0;
  CHECK((mean_out.mat() - mean_ref).cwiseAbs().maxCoeff() < 1e-14);

  // A saturated weight picks out one layer.
  Array wsat = Array::Zero(4);
  wsat[2] = 50.0;
  Tensor sat_out = weighted_average(stack, Tensor::from_flat({4}, wsat));
  const double scale = stack.h[2].value().abs().maxCoeff();
  CHECK((sat_out.value() - stack.h[2].value()).abs().maxCoeff() < 1e-12 * std::max(scale, 1.0));

  // Random weights match the direct-summation oracle.
  for (int rep = 0; rep < 5; ++rep) {
    Array w(4);
    for (Index i = 0; i < 4; ++i) w[i] = rng.uniform(-2.0, 2.0);
    std::vector<MatrixRM> mats;
    for (const auto& h : stack.h) mats.emplace_back(h.mat());
    MatrixRM expect = oracle::naive_weighted_average(mats, w);
    Tensor got = weighted_average(stack, Tensor::from_flat({4}, w));
    CHECK((got.mat() - expect).cwiseAbs().maxCoeff() < oracle::Tol::kWeightedAvg);

    // Softmax weights sum to 1 and preserve the argmax.
    Tensor sm = softmax(Tensor::from_flat({4}, w), 0);
    CHECK(std::abs(sm.value().sum() - 1.0) < 1e-12);
    Index am_w, am_s;
    w.maxCoeff(&am_w);
    sm.value().maxCoeff(&am_s);
    CHECK(am_w == am_s);
  }

  Tensor bad = Tensor::zeros({3});
  CHECK_THROWS_AS(weighted_average(stack, bad), StructuralError);
}

TEST_CASE("adapter: shapes, degenerate constant input, identity-ish init") {
  Rng rng(52);
  const Index depth = 3, frames = 7, d = 6, dp = 4;
  LayerStack stack = random_stack(depth, frames, d, rng);

  std::vector<AdapterLayerParams> adapter;
  for (Index i = 0; i < depth; ++i) {
    AdapterLayerParams a;
    a.lin1.W = Tensor::randn({d, dp}, rng, 0.4);
    a.lin1.b = Tensor::zeros({dp});
    a.ln.gain = Tensor::ones({dp});
    a.ln.bias = Tensor::randn({dp}, rng, 0.2);
    a.lin2.W = Tensor::randn({dp, dp}, rng, 0.4);
    a.lin2.b = Tensor::randn({dp}, rng, 0.1);
    adapter.push_back(std::move(a));
  }
  LayerStack out = adapt(stack, adapter);
  CHECK(out.depth() == depth);
  for (const auto& h : out.h) {
    CHECK(h.rows() == frames);
    CHECK(h.cols() == dp);
  }

  // Zero input with zero first-layer bias: layer norm of a constant row
  // gives its bias, then ReLU, then the second linear. Closed form.
  LayerStack zeros;
  for (Index i = 0; i < depth; ++i) zeros.h.push_back(Tensor::zeros({frames, d}));
  LayerStack zout = adapt(zeros, adapter);
  for (Index l = 0; l < depth; ++l) {
    Array ln_out = adapter[l].ln.bias.value();
    Array relu_out = ln_out.max(0.0);
    Eigen::RowVectorXd row = relu_out.matrix().transpose() *
                                 adapter[l].lin2.W.mat() +
                             adapter[l].lin2.b.value().matrix().transpose();
    for (Index t = 0; t < frames; ++t) {
      CHECK((zout.h[l].mat().row(t) - row).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  // Truncated-identity first linear on normalized input correlates with it.
  std::vector<AdapterLayerParams> ident;
  for (Index i = 0; i < depth; ++i) {
    AdapterLayerParams a;
    MatrixRM eye = MatrixRM::Zero(d, dp);
    for (Index k = 0; k < dp; ++k) eye(k, k) = 1.0;
    a.lin1.W = Tensor::from_matrix(eye);
    a.lin1.b = Tensor::zeros({dp});
    a.ln.gain = Tensor::ones({dp});
    a.ln.bias = Tensor::zeros({dp});
    MatrixRM eye2 = MatrixRM::Identity(dp, dp);
    a.lin2.W = Tensor::from_matrix(eye2);
    a.lin2.b = Tensor::zeros({dp});
    ident.push_back(std::move(a));
  }
  // Pre-normalize the truncated rows so the adapter's layer norm is close
  // to an identity on them.
  for (auto& h : stack.h) {
    MatrixRM m = h.mat();
    for (Index r = 0; r < m.rows(); ++r) {
      auto head = m.row(r).head(dp);
      const double mu = head.mean();
      const double sd = std::sqrt((head.array() - mu).square().mean());
      head = ((head.array() - mu) / std::max(sd, 1e-9)).matrix();
    }
    h = Tensor::from_matrix(m);
  }
  LayerStack iout = adapt(stack, ident);
  // Correlation between input column k and output column k over frames.
  double corr_sum = 0.0;
  int corr_n = 0;
  for (Index l = 0; l < depth; ++l) {
    for (Index k = 0; k < dp; ++k) {
      Eigen::VectorXd x = stack.h[l].mat().col(k);
      Eigen::VectorXd y = iout.h[l].mat().col(k);
      // ReLU clips negatives; correlate over the positive part.
      x = x.cwiseMax(0.0);
      const double cx = x.mean(), cy = y.mean();
      const double num = ((x.array() - cx) * (y.array() - cy)).sum();
      const double den = std::sqrt((x.array() - cx).square().sum() *
                                   (y.array() - cy).square().sum());
      if (den > 1e-12) {
        corr_sum += num / den;
        corr_n++;
      }
    }
  }
  CHECK(corr_sum / corr_n > 0.9);
}

TEST_CASE("ASP: uniform attention, single frame, and the moment oracle") {
  Rng rng(53);
  const Index t = 9, c = 5, hid = 4;

  // v = 0 makes attention uniform: plain mean and biased std.
  AspParams uniform = random_asp(c, hid, rng);
  uniform.v = Tensor::zeros({hid});
  LayerStack s = random_stack(1, t, c, rng);
  Tensor pooled = asp_pool(s.h[0], uniform);
  REQUIRE(pooled.size() == 2 * c);
  for (Index j = 0; j < c; ++j) {
    const double mu = s.h[0].mat().col(j).mean();
    const double var = (s.h[0].mat().col(j).array() - mu).square().mean();
    CHECK(pooled.value()[j] == doctest::Approx(mu).epsilon(1e-12));
    CHECK(pooled.value()[c + j] ==
          doctest::Approx(std::sqrt(std::max(var, 1e-6))).epsilon(1e-9));
  }

  // T = 1: mu is the frame, sigma is the floor.
  LayerStack one = random_stack(1, 1, c, rng);
  Tensor p1 = asp_pool(one.h[0], uniform);
  for (Index j = 0; j < c; ++j) {
    CHECK(p1.value()[j] == one.h[0].value()[j]);
    CHECK(p1.value()[c + j] == doctest::Approx(std::sqrt(1e-6)).epsilon(1e-12));
  }

  // Random attention matches the naive weighted-moment oracle.
  for (int rep = 0; rep < 5; ++rep) {
    AspParams asp = random_asp(c, hid, rng);
    LayerStack sr = random_stack(1, t, c, rng);
    Tensor got = asp_pool(sr.h[0], asp);
    Array expect = oracle::naive_asp(MatrixRM(sr.h[0].mat()), MatrixRM(asp.att.W.mat()),
                                     asp.att.b.value(), asp.v.value(), 1e-6);
    CHECK((got.value() - expect).abs().maxCoeff() < oracle::Tol::kAsp);
  }
}

TEST_CASE("ASP is invariant to frame permutation and duplication") {
  Rng rng(54);
  const Index t = 8, c = 4, hid = 3;
  AspParams asp = random_asp(c, hid, rng);
  LayerStack s = random_stack(1, t, c, rng);
  Tensor base = asp_pool(s.h[0], asp);

  // sigma components stay above the floor.
  for (Index j = 0; j < c; ++j) CHECK(base.value()[c + j] >= std::sqrt(1e-6) - 1e-15);

  // Permutation.
  std::vector<Index> perm(t);
  for (Index i = 0; i < t; ++i) perm[i] = i;
  Rng prng(55);
  prng.shuffle(perm);
  MatrixRM permuted(t, c);
  for (Index i = 0; i < t; ++i) permuted.row(i) = s.h[0].mat().row(perm[i]);
  Tensor p = asp_pool(Tensor::from_matrix(permuted), asp);
  CHECK((p.value() - base.value()).abs().maxCoeff() < 1e-10);

  // Duplication: attention renormalizes.
  MatrixRM doubled(2 * t, c);
  doubled.topRows(t) = s.h[0].mat();
  doubled.bottomRows(t) = s.h[0].mat();
  Tensor d = asp_pool(Tensor::from_matrix(doubled), asp);
  CHECK((d.value() - base.value()).abs().maxCoeff() < 1e-10);
}

TEST_CASE("embed_mfa dimension arithmetic and invariances") {
  Rng rng(56);
  const Index depth = 5, frames = 7, c = 6;
  LayerStack stack = random_stack(depth, frames, c, rng);
  AspParams asp = random_asp(depth * c, 4, rng);
  LinearParams emb;
  emb.W = Tensor::randn({2 * depth * c, 16}, rng, 0.2);
  emb.b = Tensor::zeros({16});

  Tensor e = embed_mfa(stack, asp, emb);
  CHECK(e.size() == 16);

  // Frame permutation leaves the embedding unchanged.
  std::vector<Index> perm(frames);
  for (Index i = 0; i < frames; ++i) perm[i] = i;
  Rng prng(57);
  prng.shuffle(perm);
  LayerStack permuted;
  for (const auto& h : stack.h) {
    MatrixRM m(frames, c);
    for (Index i = 0; i < frames; ++i) m.row(i) = h.mat().row(perm[i]);
    permuted.h.push_back(Tensor::from_matrix(m));
  }
  Tensor ep = embed_mfa(permuted, asp, emb);
  CHECK((ep.value() - e.value()).abs().maxCoeff() < 1e-10);

  // Duplicating every frame leaves it unchanged too.
  LayerStack doubled;
  for (const auto& h : stack.h) {
    MatrixRM m(2 * frames, c);
    m.topRows(frames) = h.mat();
    m.bottomRows(frames) = h.mat();
    doubled.h.push_back(Tensor::from_matrix(m));
  }
  Tensor ed = embed_mfa(doubled, asp, emb);
  CHECK((ed.value() - e.value()).abs().maxCoeff() < 1e-10);

  // Ragged stacks are rejected.
  LayerStack ragged = stack;
  ragged.h[1] = Tensor::zeros({frames, c + 1});
  CHECK_THROWS_AS(embed_mfa(ragged, asp, emb), StructuralError);

  // Zeroing one layer changes the embedding (no information is discarded).
  LayerStack zeroed = stack;
  zeroed.h[2] = Tensor::zeros({frames, c});
  Tensor ez = embed_mfa(zeroed, asp, emb);
  CHECK((ez.value() - e.value()).abs().maxCoeff() > 1e-8);
}

TEST_CASE("full heads produce 256-dim embeddings at the desk-scale config") {
  Rng rng(58);
  HeadConfig cfg;
  cfg.kind = HeadKind::AdapterMfa;
  const int depth = 5, dim = 128;
  SpeakerHead head = SpeakerHead::make(cfg, depth, dim, rng);
  LayerStack stack = random_stack(depth, 6, dim, rng);
  Tensor e = head.embed(stack);
  CHECK(e.size() == 256);

  // Concat C = (L+1) d' = 640, ASP output 1280, embedding 256.
  CHECK(head.asp.att.W.rows() == 5 * 128);
  CHECK(head.emb.W.rows() == 2 * 5 * 128);
  CHECK(head.emb.W.cols() == 256);

  HeadConfig wcfg;
  wcfg.kind = HeadKind::WeightedAvg;
  SpeakerHead whead = SpeakerHead::make(wcfg, depth, dim, rng);
  Tensor we = whead.embed(stack);
  CHECK(we.size() == 256);
}

TEST_CASE("head parameter counts match the closed-form dimension formulas") {
  Rng rng(59);
  const int depth = 5, d = 64, dp = 128, embed = 256;

  HeadConfig acfg;
  acfg.kind = HeadKind::AdapterMfa;
  acfg.adapter_dim = dp;
  SpeakerHead adapter_head = SpeakerHead::make(acfg, depth, d, rng);
  const Index cat = static_cast<Index>(depth) * dp;
  const Index expect_adapter =
      depth * (d * dp + dp + 2 * dp + dp * dp + dp)  // lin1 + LN + lin2
      + (cat * dp + dp + dp)                         // ASP att + v (hidden = d')
      + (2 * cat * embed + embed);                   // final linear
  CHECK(adapter_head.param_count() == expect_adapter);

  HeadConfig mcfg;
  mcfg.kind = HeadKind::Mfa;
  SpeakerHead mfa_head = SpeakerHead::make(mcfg, depth, d, rng);
  const Index mcat = static_cast<Index>(depth) * d;
  const Index expect_mfa = (mcat * d + d + d) + (2 * mcat * embed + embed);
  CHECK(mfa_head.param_count() == expect_mfa);

  // The two heads differ, mirroring the published parameter-count split.
  CHECK(adapter_head.param_count() != mfa_head.param_count());

  HeadConfig wcfg;
  wcfg.kind = HeadKind::WeightedAvg;
  SpeakerHead whead = SpeakerHead::make(wcfg, depth, d, rng);
  const int c = wcfg.ecapa_channels;
  const Index expect_weighted = depth                       // layer weights
                                + (d * c + c)               // input linear
                                + 3 * (3 * c * c + c + 2 * c)  // dilated blocks
                                + (c * c + c + c)           // ASP
                                + (2 * c * embed + embed);  // final linear
  CHECK(whead.param_count() == expect_weighted);
}

TEST_CASE("every head is differentiable end to end") {
  Rng rng(60);
  for (HeadKind kind : {HeadKind::WeightedAvg, HeadKind::Mfa, HeadKind::AdapterMfa}) {
    HeadConfig cfg;
    cfg.kind = kind;
    cfg.embed_dim = 8;
    cfg.adapter_dim = 4;
    cfg.ecapa_channels = 6;
    SpeakerHead head = SpeakerHead::make(cfg, 3, 5, rng);
    LayerStack stack = random_stack(3, 6, 5, rng);

    auto loss_fn = [&](const std::vector<Tensor>&) {
      Tensor e = head.embed(stack);
      return sum(mul(e, e));
    };
    std::vector<Tensor> leaves;
    for (auto& [name, t] : head.named_params()) leaves.push_back(t);
    // Also differentiate through the stack itself.
    leaves.push_back(stack.h[0]);
    const double err = oracle::grad_check(loss_fn, leaves);
    INFO("head kind " << head_kind_name(kind) << " rel err " << err);
    CHECK(err < oracle::Tol::kGradRel);
  }
}

TEST_CASE("head checkpoint round trip") {
  Rng rng(61);
  HeadConfig cfg;
  cfg.kind = HeadKind::WeightedAvg;
  cfg.embed_dim = 16;
  cfg.ecapa_channels = 8;
  SpeakerHead head = SpeakerHead::make(cfg, 3, 6, rng);
  Checkpoint ckpt;
  head.save_into(ckpt);
  SpeakerHead restored = SpeakerHead::load_from(ckpt);
  CHECK(restored.param_count() == head.param_count());
  LayerStack stack = random_stack(3, 5, 6, rng);
  CHECK((restored.embed(stack).value() - head.embed(stack).value()).abs().maxCoeff() == 0.0);
}
