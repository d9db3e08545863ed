// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

namespace svf {

ParamSelector selector_from_name(const std::string& name) {
  if (name == "head") return ParamSelector::HeadOnly;
  if (name == "head+lora") return ParamSelector::HeadLora;
  if (name == "all") return ParamSelector::All;
  throw ConfigError("unknown trainable-parameter selector \"" + name + "\"");
}

const char* selector_name(ParamSelector s) {
  switch (s) {
    case ParamSelector::HeadOnly: return "head";
    case ParamSelector::HeadLora: return "head+lora";
    case ParamSelector::All: return "all";
  }
  return "?";
}

void StageConfig::validate() const {
  if (frame_min > frame_max || frame_min < 2) {
    throw ConfigError("stage " + name + ": bad frame range");
  }
  if (margin < 0.0 || margin > 0.6) throw ConfigError("stage " + name + ": margin out of [0,0.6]");
  if (epochs < 0 || batch_size < 1) throw ConfigError("stage " + name + ": bad epochs/batch");
}

TrainData TrainData::load(const Manifest& manifest, const std::string& root_dir) {
  if (manifest.empty()) throw ConfigError("training: empty dataset manifest");
  TrainData data;
  std::vector<std::string> speakers;
  for (const auto& e : manifest) {
    const std::string full =
        e.path.starts_with("/") ? e.path : (std::filesystem::path(root_dir) / e.path).string();
    data.waves.push_back(read_wav(full));
    data.utt_ids.push_back(e.utt_id);
    int idx = -1;
    for (std::size_t s = 0; s < speakers.size(); ++s) {
      if (speakers[s] == e.speaker_id) {
        idx = static_cast<int>(s);
        break;
      }
    }
    if (idx < 0) {
      idx = static_cast<int>(speakers.size());
      speakers.push_back(e.speaker_id);
    }
    data.speaker_index.push_back(idx);
  }
  data.n_speakers = static_cast<int>(speakers.size());
  return data;
}

FeatureStats corpus_stats(const TrainData& data) {
  std::vector<FbankFeatures> feats;
  feats.reserve(data.waves.size());
  for (const auto& w : data.waves) feats.push_back(fbank(w));
  return feature_stats(feats);
}

std::vector<std::pair<std::string, Tensor>> select_trainable(SvModel& model,
                                                             ArcFaceParams& arcface,
                                                             ParamSelector selector) {
  std::vector<std::pair<std::string, Tensor>> all = model.encoder.named_params();
  for (auto& p : model.head.named_params()) all.push_back(p);
  all.emplace_back("arcface.W", arcface.W);

  auto selected = [&](const std::string& name) {
    const bool is_lora = name.rfind("lora.", 0) == 0;
    const bool is_head = name.rfind("head.", 0) == 0 || name == "arcface.W";
    switch (selector) {
      case ParamSelector::HeadOnly: return is_head;
      case ParamSelector::HeadLora: return is_head || is_lora;
      case ParamSelector::All: return true;
    }
    return false;
  };

  // LoRA keeps its base weights frozen regardless of the selector.
  std::vector<std::string> lora_frozen;
  const auto& layers = model.encoder.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].attn.lora_q) {
      lora_frozen.push_back("enc.layer" + std::to_string(i) + ".attn.q.W");
    }
    if (layers[i].attn.lora_v) {
      lora_frozen.push_back("enc.layer" + std::to_string(i) + ".attn.v.W");
    }
  }

  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : all) {
    bool take = selected(name);
    for (const auto& frozen : lora_frozen) {
      if (name == frozen) take = false;
    }
    t.set_requires_grad(take);
    if (take) out.emplace_back(name, t);
  }
  return out;
}

ArcFaceParams lmft_class_subset(const ArcFaceParams& src, int n_speakers) {
  if (src.W.rows() == n_speakers) return src;
  if (src.W.rows() != 3 * n_speakers) {
    throw StructuralError("lmft_class_subset: class matrix has " + std::to_string(src.W.rows()) +
                          " rows for " + std::to_string(n_speakers) + " speakers");
  }
  MatrixRM sub(n_speakers, src.W.cols());
  for (int s = 0; s < n_speakers; ++s) {
    sub.row(s) = src.W.mat().row(3 * s + 1);  // the factor-1.0 class
  }
  ArcFaceParams out;
  out.W = Tensor::from_matrix(sub, true);
  out.margin = src.margin;
  out.scale = src.scale;
  return out;
}

StageResult run_stage(SvModel& model, ArcFaceParams& arcface, const TrainData& data,
                      const StageConfig& cfg, const Rng& stage_rng, int start_epoch,
                      AdamW* resumed_optimizer, const std::function<void(int, AdamW&)>& on_epoch_end) {
  cfg.validate();
  if (data.waves.empty()) throw ConfigError("run_stage: empty dataset");
  const int classes = data.num_classes(cfg.speed_perturb);
  if (arcface.W.rows() != classes) {
    throw StructuralError("run_stage: arcface has " + std::to_string(arcface.W.rows()) +
                          " classes, stage needs " + std::to_string(classes));
  }

  auto trainable = select_trainable(model, arcface, cfg.selector);
  AdamWConfig opt_cfg;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW local_opt(trainable, opt_cfg);
  AdamW& opt = resumed_optimizer ? *resumed_optimizer : local_opt;

  ArcFaceParams stage_arc{arcface.W, cfg.margin, cfg.scale};
  const double factors[3] = {0.9, 1.0, 1.1};

  const Index n = static_cast<Index>(data.waves.size());
  const Index steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  StageResult result;
  char line[160];
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng order_rng = stage_rng.split("order", static_cast<std::uint64_t>(epoch));
    Rng aug_rng = stage_rng.split("augment", static_cast<std::uint64_t>(epoch));
    Rng crop_rng = stage_rng.split("crop", static_cast<std::uint64_t>(epoch));
    Rng drop_rng = stage_rng.split("dropout", static_cast<std::uint64_t>(epoch));
    Rng sp_rng = stage_rng.split("speed", static_cast<std::uint64_t>(epoch));

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    Index cursor = 0;
    for (Index step = 0; step < steps_per_epoch; ++step) {
      const Index batch = std::min<Index>(cfg.batch_size, n - cursor);
      const double lr = cfg.schedule.lr_at(static_cast<double>(epoch) +
                                           static_cast<double>(step) /
                                               static_cast<double>(steps_per_epoch));
      opt.zero_grad();
      double batch_loss = 0.0;
      for (Index b = 0; b < batch; ++b) {
        const Index i = order[static_cast<std::size_t>(cursor + b)];
        Waveform wave = data.waves[static_cast<std::size_t>(i)];
        int label = data.speaker_index[static_cast<std::size_t>(i)];
        if (cfg.speed_perturb) {
          const int fi = static_cast<int>(sp_rng.uniform_int(3));
          wave = speed_perturb(wave, factors[fi]);
          label = 3 * label + fi;
        }
        if (cfg.augment) wave = augment(wave, cfg.augment_policy, aug_rng);

        MatrixRM feats_full = model.features_for(wave);
        const Index span = cfg.frame_max - cfg.frame_min + 1;
        const Index target = cfg.frame_min + crop_rng.uniform_int(span);
        MatrixRM cropped = crop_or_tile(feats_full, target, crop_rng);
        Tensor feats = Tensor::from_matrix(cropped);

        Graph g;
        {
          Recording rec(g);
          LayerStack stack = model.encoder.encode(feats, RunMode::Train, nullptr, &drop_rng);
          Tensor emb = model.head.embed(stack);
          Tensor loss = mul_scalar(arcface_loss(emb, {label}, stage_arc),
                                   1.0 / static_cast<double>(batch));
          batch_loss += loss.item() * static_cast<double>(batch);
          g.backward(loss);
        }
      }
      cursor += batch;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("run_stage: loss diverged at stage " + cfg.name + " epoch " +
                           std::to_string(epoch) + " step " + std::to_string(step));
      }
      opt.step(lr);
      const double mean_loss = batch_loss / static_cast<double>(batch);
      epoch_loss += batch_loss;
      std::snprintf(line, sizeof(line), "%d\t%lld\t%.17g\t%.17g", epoch,
                    static_cast<long long>(step), lr, mean_loss);
      result.metric_lines.emplace_back(line);
    }
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(n));
    if (on_epoch_end) on_epoch_end(epoch, opt);
  }
  return result;
}

}  // namespace svf
