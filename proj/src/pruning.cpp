// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/pruning.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace svf {

namespace {

struct KeptIndices {
  std::vector<Index> idx;
  std::vector<double> z;
};

KeptIndices kept_of(const Array& z_all, Index offset, Index count) {
  KeptIndices out;
  for (Index i = 0; i < count; ++i) {
    const double z = z_all[offset + i];
    if (z > 0.0) {
      out.idx.push_back(i);
      out.z.push_back(z);
    }
  }
  return out;
}

// Gathers columns of src listed in idx.
MatrixRM gather_cols(const ConstMatMap& src, const std::vector<Index>& idx) {
  MatrixRM out(src.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = src.col(idx[j]);
  return out;
}

MatrixRM gather_rows_scaled(const ConstMatMap& src, const std::vector<Index>& idx,
                            const std::vector<double>& scale) {
  MatrixRM out(static_cast<Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Index>(i)) = src.row(idx[i]) * scale[i];
  }
  return out;
}

Array gather_vec(const Array& src, const std::vector<Index>& idx) {
  Array out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = src[idx[i]];
  return out;
}

Tensor param_from(MatrixRM m) {
  return Tensor::from_matrix(m, true);
}

Tensor param_from_vec(Array v) {
  const Index n = v.size();
  return Tensor::from_flat({n}, std::move(v), true);
}

}  // namespace

std::string PruneReport::to_text() const {
  std::ostringstream os;
  os << "layer  heads  ffn1      ffn2      conv\n";
  for (const auto& r : rows) {
    os << r.layer << "      " << r.heads_kept << "/" << r.heads_total << "    " << r.ffn1_kept
       << "/" << r.ffn1_total << "   " << r.ffn2_kept << "/" << r.ffn2_total << "   "
       << r.conv_kept << "/" << r.conv_total << "\n";
  }
  os << "prunable parameters kept: " << prunable_kept << " / " << prunable_total
     << "  (achieved sparsity " << achieved_sparsity() << ")\n";
  return os.str();
}

ConformerModel extract_pruned(const ConformerModel& model, const GateSet& gates,
                              PruneReport* report) {
  if (model.has_lora()) {
    throw ContractError("extract_pruned: merge LoRA before extraction");
  }
  gates.check_layout(model);
  const Array z = gates.deterministic();

  // Round-trip through a checkpoint gives a clean deep copy to rewrite.
  ConformerModel out = model.clone();
  const Index d = model.config().model_dim;

  PruneReport rep;
  Index group_i = 0;
  Index off = 0;
  for (std::size_t li = 0; li < model.layers().size(); ++li) {
    const ConformerLayer& L = model.layers()[li];
    ConformerLayer& O = out.layers()[li];
    PruneReport::LayerRow row;
    row.layer = static_cast<int>(li);

    // --- attention heads ---
    const Index hd = L.attn.head_dim;
    KeptIndices heads = kept_of(z, off, L.attn.num_heads);
    off += L.attn.num_heads;
    row.heads_total = L.attn.num_heads;
    row.heads_kept = static_cast<int>(heads.idx.size());
    if (heads.idx.empty()) {
      throw StructuralError("extract_pruned: layer " + std::to_string(li) +
                            " would lose all attention heads; lower the target sparsity or "
                            "exempt this layer");
    }
    {
      const Index kept = static_cast<Index>(heads.idx.size());
      MatrixRM wq(d, kept * hd), wk(d, kept * hd), wv(d, kept * hd);
      Array bq(kept * hd), bk(kept * hd), bv(kept * hd);
      MatrixRM wo(kept * hd, d);
      MatrixRM rel(kept, L.attn.rel_bias.cols());
      for (Index h = 0; h < kept; ++h) {
        const Index src = heads.idx[static_cast<std::size_t>(h)];
        const double zh = heads.z[static_cast<std::size_t>(h)];
        wq.middleCols(h * hd, hd) = L.attn.q.W.mat().middleCols(src * hd, hd);
        wk.middleCols(h * hd, hd) = L.attn.k.W.mat().middleCols(src * hd, hd);
        wv.middleCols(h * hd, hd) = L.attn.v.W.mat().middleCols(src * hd, hd);
        bq.segment(h * hd, hd) = L.attn.q.b.value().segment(src * hd, hd);
        bk.segment(h * hd, hd) = L.attn.k.b.value().segment(src * hd, hd);
        bv.segment(h * hd, hd) = L.attn.v.b.value().segment(src * hd, hd);
        // The gate multiplies the head output, which feeds these rows of o.
        wo.middleRows(h * hd, hd) = L.attn.o.W.mat().middleRows(src * hd, hd) * zh;
        rel.row(h) = L.attn.rel_bias.mat().row(src);
      }
      O.attn.q = LinearParams{param_from(wq), param_from_vec(bq)};
      O.attn.k = LinearParams{param_from(wk), param_from_vec(bk)};
      O.attn.v = LinearParams{param_from(wv), param_from_vec(bv)};
      O.attn.o = LinearParams{param_from(wo), O.attn.o.b};
      O.attn.rel_bias = param_from(rel);
      O.attn.num_heads = static_cast<int>(kept);
      O.attn.head_dim = static_cast<int>(hd);
    }

    // --- FFN units ---
    auto extract_ffn = [&](const FfnParams& src, FfnParams& dst) {
      KeptIndices units = kept_of(z, off, src.hidden);
      off += src.hidden;
      const Index kept = static_cast<Index>(units.idx.size());
      if (kept == 0) {
        dst = FfnParams{LinearParams{}, LinearParams{Tensor(), src.out.b}, 0};
        return std::make_pair(src.hidden, 0);
      }
      dst.in = LinearParams{param_from(gather_cols(src.in.W.mat(), units.idx)),
                            param_from_vec(gather_vec(src.in.b.value(), units.idx))};
      dst.out = LinearParams{param_from(gather_rows_scaled(src.out.W.mat(), units.idx, units.z)),
                             src.out.b};
      dst.hidden = static_cast<int>(kept);
      return std::make_pair(src.hidden, static_cast<int>(kept));
    };
    auto [f1_total, f1_kept] = extract_ffn(L.ffn1, O.ffn1);
    row.ffn1_total = f1_total;
    row.ffn1_kept = f1_kept;
    auto [f2_total, f2_kept] = extract_ffn(L.ffn2, O.ffn2);
    row.ffn2_total = f2_total;
    row.ffn2_kept = f2_kept;

    // --- conv channels ---
    {
      KeptIndices chans = kept_of(z, off, L.conv.channels);
      off += L.conv.channels;
      row.conv_total = L.conv.channels;
      row.conv_kept = static_cast<int>(chans.idx.size());
      const Index kept = static_cast<Index>(chans.idx.size());
      if (kept == 0) {
        O.conv = ConvParams{LinearParams{}, Tensor(), Tensor(),
                            LinearParams{Tensor(), O.conv.pw2.b}, L.conv.kernel, 0};
      } else {
        const Index c_old = L.conv.channels;
        // pw1 keeps the value half and gate half columns of each channel.
        std::vector<Index> pw1_cols;
        for (Index i : chans.idx) pw1_cols.push_back(i);
        for (Index i : chans.idx) pw1_cols.push_back(c_old + i);
        (void)c_old;
        O.conv.pw1 = LinearParams{param_from(gather_cols(L.conv.pw1.W.mat(), pw1_cols)),
                                  param_from_vec(gather_vec(L.conv.pw1.b.value(), pw1_cols))};
        O.conv.dw_kernel = param_from(gather_cols(L.conv.dw_kernel.mat(), chans.idx));
        O.conv.dw_bias = param_from_vec(gather_vec(L.conv.dw_bias.value(), chans.idx));
        O.conv.pw2 = LinearParams{
            param_from(gather_rows_scaled(L.conv.pw2.W.mat(), chans.idx, chans.z)),
            O.conv.pw2.b};
        O.conv.kernel = L.conv.kernel;
        O.conv.channels = static_cast<int>(kept);
      }
    }
    rep.rows.push_back(row);
  }
  (void)group_i;

  // Bookkeeping over the original groups.
  rep.prunable_total = gates.total_params();
  rep.prunable_kept = 0;
  for (std::size_t i = 0; i < gates.groups.size(); ++i) {
    if (z[static_cast<Index>(i)] > 0.0) rep.prunable_kept += gates.groups[i].param_count;
  }
  if (report != nullptr) *report = rep;
  return out;
}

MatrixRM crop_or_tile(const MatrixRM& frames, Index target, Rng& rng) {
  const Index t = frames.rows();
  if (target <= 0) throw ContractError("crop_or_tile: target must be positive");
  if (t >= target) {
    const Index start = rng.uniform_int(t - target + 1);
    return frames.middleRows(start, target);
  }
  MatrixRM out(target, frames.cols());
  for (Index i = 0; i < target; ++i) out.row(i) = frames.row(i % t);
  return out;
}

namespace {

double stack_floor(const LayerStack& s) {
  return -static_cast<double>(s.depth()) * static_cast<double>(s.frames());
}

}  // namespace

PruneStats prune_train(ConformerModel& student, const ConformerModel& teacher,
                       const std::vector<MatrixRM>& features, GateSet& gates,
                       SparsityController& controller, const PruneTrainConfig& cfg, Rng& rng,
                       const std::function<void(Index, double, double, double)>& on_step) {
  if (features.empty()) throw ContractError("prune_train: no features");
  gates.check_layout(student);

  AdamWConfig param_cfg;
  param_cfg.weight_decay = cfg.weight_decay;
  AdamW param_opt(student.named_params(), param_cfg);
  AdamWConfig sparsity_cfg;
  sparsity_cfg.weight_decay = 0.0;
  AdamW sparsity_opt({{"gate.log_alpha", gates.log_alpha}}, sparsity_cfg);
  // Multipliers take the textbook ascent step lambda += lr * violation so
  // pressure stays proportional to the constraint error. Closed gates
  // saturate and cannot reopen, so once the target is crossed the linear
  // multiplier's accumulated push-to-close is drained quickly instead of
  // unwinding at the (now tiny) error rate.
  auto lambda_ascent = [&](double lr) {
    const double e = controller.lambda1.has_grad() ? controller.lambda1.grad()[0] : 0.0;
    double& l1 = controller.lambda1.mutable_value()[0];
    l1 += lr * e;
    if (e > 0.0 && l1 < 0.0) l1 *= 0.9;
    if (controller.lambda2.has_grad()) {
      controller.lambda2.mutable_value()[0] += lr * controller.lambda2.grad()[0];
    }
    controller.lambda1.zero_grad();
    controller.lambda2.zero_grad();
  };

  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = rng.split("order");
  shuffle_rng.shuffle(order);
  Rng crop_rng = rng.split("crop");
  Rng gate_rng = rng.split("gate");

  PruneStats stats;
  double tail_loss = 0.0, tail_floor = 0.0;
  Index tail_n = 0;
  std::size_t cursor = 0;
  for (Index step = 0; step < cfg.steps; ++step) {
    param_opt.zero_grad();
    sparsity_opt.zero_grad();
    controller.lambda1.zero_grad();
    controller.lambda2.zero_grad();
    double step_distill = 0.0, step_floor = 0.0, step_penalty = 0.0;

    // Teacher forwards stay outside the recording: plain constants.
    std::vector<Tensor> batch_feats;
    std::vector<LayerStack> teacher_stacks;
    for (Index b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        cursor = 0;
        shuffle_rng.shuffle(order);
      }
      const MatrixRM& full = features[order[cursor++]];
      const Index span = cfg.frame_max - cfg.frame_min + 1;
      const Index target = cfg.frame_min + crop_rng.uniform_int(span);
      MatrixRM crop = crop_or_tile(full, target, crop_rng);
      batch_feats.push_back(Tensor::from_matrix(crop));
      teacher_stacks.push_back(teacher.encode(batch_feats.back(), RunMode::Eval));
      step_floor += stack_floor(teacher_stacks.back());
    }

    Graph g;
    {
      Recording rec(g);
      for (Index b = 0; b < cfg.batch_size; ++b) {
        Tensor zvec = gates.sample(gate_rng);
        GateTensors gts = gates.slice_per_layer(zvec, student);
        LayerStack student_stack =
            student.encode(batch_feats[static_cast<std::size_t>(b)], RunMode::Eval, &gts);
        Tensor loss = mul_scalar(
            distill_loss(teacher_stacks[static_cast<std::size_t>(b)], student_stack, cfg.distill),
            1.0 / static_cast<double>(cfg.batch_size));
        step_distill += loss.item() * static_cast<double>(cfg.batch_size);
        g.backward(loss);
      }
      Tensor penalty = controller.penalty(gates, step);
      step_penalty = penalty.item();
      g.backward(penalty);
    }
    if (!std::isfinite(step_distill) || !std::isfinite(step_penalty)) {
      throw NumericError("prune_train: loss diverged at step " + std::to_string(step) +
                         " (distill " + std::to_string(step_distill) + ", penalty " +
                         std::to_string(step_penalty) + ")");
    }
    param_opt.step(cfg.lr_params);
    sparsity_opt.step(cfg.lr_sparsity);
    lambda_ascent(cfg.lr_lambda);

    const double mean_distill = step_distill / static_cast<double>(cfg.batch_size);
    const double mean_floor = step_floor / static_cast<double>(cfg.batch_size);
    if (on_step) {
      const double s_hat = 1.0 - gates.expected_l0_value() / static_cast<double>(gates.total_params());
      on_step(step, mean_distill, step_penalty, s_hat);
    }
    if (step >= cfg.steps - 50) {
      tail_loss += mean_distill;
      tail_floor += mean_floor;
      tail_n++;
    }
  }
  stats.steps_run = cfg.steps;
  stats.final_distill = tail_loss / static_cast<double>(std::max<Index>(tail_n, 1));
  stats.final_floor = tail_floor / static_cast<double>(std::max<Index>(tail_n, 1));
  stats.expected_sparsity =
      1.0 - gates.expected_l0_value() / static_cast<double>(gates.total_params());
  return stats;
}

double distill_train(ConformerModel& student, const ConformerModel& teacher,
                     const std::vector<MatrixRM>& features, Index epochs, double lr,
                     const PruneTrainConfig& cfg, Rng& rng) {
  if (features.empty()) throw ContractError("distill_train: no features");
  AdamWConfig param_cfg;
  param_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(student.named_params(), param_cfg);
  Rng crop_rng = rng.split("post_crop");
  Rng order_rng = rng.split("post_order");
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);

  double last_epoch_mean = 0.0;
  for (Index e = 0; e < epochs; ++e) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Index span = cfg.frame_max - cfg.frame_min + 1;
      const Index target = cfg.frame_min + crop_rng.uniform_int(span);
      MatrixRM crop = crop_or_tile(features[order[i]], target, crop_rng);
      Tensor feats = Tensor::from_matrix(crop);
      LayerStack teacher_stack = teacher.encode(feats, RunMode::Eval);
      opt.zero_grad();
      Graph g;
      {
        Recording rec(g);
        LayerStack student_stack = student.encode(feats, RunMode::Eval);
        Tensor loss = distill_loss(teacher_stack, student_stack, cfg.distill);
        total += loss.item();
        g.backward(loss);
      }
      opt.step(lr);
    }
    last_epoch_mean = total / static_cast<double>(order.size());
    if (!std::isfinite(last_epoch_mean)) {
      throw NumericError("distill_train: loss diverged in epoch " + std::to_string(e));
    }
  }
  return last_epoch_mean;
}

}  // namespace svf
