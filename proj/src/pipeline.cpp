// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "svf/scoring.hpp"
#include "svf/synth.hpp"

namespace svf {

namespace fs = std::filesystem;

namespace {

// Exclusive ownership of an output directory for the duration of a command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".svforge_lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      throw SvError("output directory \"" + dir.string() +
                    "\" is locked by another run (remove " + path_.string() + " if stale)");
    }
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

std::string stage_name_of(int id) {
  switch (id) {
    case 1: return "freeze";
    case 2: return "joint";
    case 3: return "lmft";
  }
  throw ConfigError("stage id must be 1, 2 or 3");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open \"" + path.string() + "\" for writing");
  os << text;
}

AugmentPolicy augment_policy_from(const RunConfig& cfg) {
  AugmentPolicy p;
  p.noise_prob = cfg.get_double("train.noise_prob");
  p.reverb_prob = cfg.get_double("train.reverb_prob");
  p.snr_min_db = cfg.get_double("train.snr_min_db");
  p.snr_max_db = cfg.get_double("train.snr_max_db");
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

void cmd_synth(const RunConfig& cfg, bool force) {
  const fs::path dir = cfg.get_string("data.dir");
  const int n_speakers = cfg.get_int("data.n_speakers");
  const int utts = cfg.get_int("data.utts_per_speaker");
  const int eval_per = cfg.get_int("data.eval_per_speaker");
  const int dev_per = cfg.get_int("data.dev_per_speaker");
  const double min_s = cfg.get_double("data.min_seconds");
  const double max_s = cfg.get_double("data.max_seconds");
  if (n_speakers < 2) throw ConfigError("synth: need at least 2 speakers");
  if (eval_per + 1 > utts) throw ConfigError("synth: eval_per_speaker leaves no training data");

  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw ConfigError("synth: output dir \"" + dir.string() + "\" exists; use --force");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "wav");

  Rng root(cfg.get_u64("seed"));
  Rng data_rng = root.split("data");

  Manifest train, eval;
  std::vector<std::string> dev_ids;
  std::vector<std::string> eval_ids;
  std::vector<std::string> eval_speaker;
  for (int s = 0; s < n_speakers; ++s) {
    SynthSpeaker spk = make_speaker(s, data_rng);
    for (int u = 0; u < utts; ++u) {
      Rng utt_rng = data_rng.split("utt", static_cast<std::uint64_t>(s * 100000 + u));
      const double dur = utt_rng.uniform(min_s, max_s);
      Waveform w = synth_utterance(spk, utt_rng, dur);
      char utt_id[32];
      std::snprintf(utt_id, sizeof(utt_id), "%s_utt%03d", spk.speaker_id.c_str(), u);
      const std::string rel = "wav/" + std::string(utt_id) + ".wav";
      write_wav((dir / rel).string(), w);
      ManifestEntry entry{utt_id, spk.speaker_id, rel};
      if (u >= utts - eval_per) {
        eval.push_back(entry);
        eval_ids.push_back(utt_id);
        eval_speaker.push_back(spk.speaker_id);
      } else {
        train.push_back(entry);
        if (u < dev_per) dev_ids.push_back(utt_id);
      }
    }
  }
  save_manifest((dir / "manifest_train.tsv").string(), train);
  save_manifest((dir / "manifest_eval.tsv").string(), eval);

  auto speaker_of = [](const std::string& utt_id) { return utt_id.substr(0, utt_id.find('_')); };

  TrialList trials;
  for (std::size_t i = 0; i < eval_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < eval_ids.size(); ++j) {
      trials.push_back(Trial{eval_speaker[i] == eval_speaker[j] ? 1 : 0, eval_ids[i], eval_ids[j]});
    }
  }
  save_trials((dir / "trials.txt").string(), trials);

  TrialList dev_trials;
  for (std::size_t i = 0; i < dev_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < dev_ids.size(); ++j) {
      dev_trials.push_back(
          Trial{speaker_of(dev_ids[i]) == speaker_of(dev_ids[j]) ? 1 : 0, dev_ids[i], dev_ids[j]});
    }
  }
  save_trials((dir / "trials_dev.txt").string(), dev_trials);

  bool has_target = false, has_nontarget = false;
  for (const auto& t : trials) (t.label ? has_target : has_nontarget) = true;
  if (!has_target || !has_nontarget) {
    throw InvariantViolation("synth: generated trial list is single-class");
  }
  std::printf("synth: %d speakers, %zu train / %zu eval utterances, %zu trials (%s)\n",
              n_speakers, train.size(), eval.size(), trials.size(), dir.c_str());
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

SvModel build_model(const RunConfig& cfg, std::uint64_t seed, int num_layers_override) {
  ConformerConfig ecfg;
  ecfg.num_layers = num_layers_override > 0 ? num_layers_override : cfg.get_int("encoder.layers");
  ecfg.model_dim = cfg.get_int("encoder.dim");
  ecfg.ffn_dim = cfg.get_int("encoder.ffn_dim");
  ecfg.num_heads = cfg.get_int("encoder.heads");
  ecfg.conv_kernel = cfg.get_int("encoder.conv_kernel");
  ecfg.rel_bias_radius = cfg.get_int("encoder.rel_radius");
  ecfg.dropout_rate = cfg.get_double("encoder.dropout");
  ecfg.validate();

  HeadConfig hcfg;
  hcfg.kind = head_kind_from_name(cfg.get_string("head.kind"));
  hcfg.embed_dim = cfg.get_int("head.embed_dim");
  hcfg.adapter_dim = cfg.get_int("head.adapter_dim");
  hcfg.asp_hidden = cfg.get_int("head.asp_hidden");
  hcfg.ecapa_channels = cfg.get_int("head.ecapa_channels");
  hcfg.lora_rank = cfg.get_int("head.lora_rank");
  hcfg.lora_alpha = cfg.get_double("head.lora_alpha");

  Rng root(seed);
  Rng init = root.split("init");
  SvModel model;
  model.encoder = ConformerModel(ecfg, init);
  model.head = SpeakerHead::make(hcfg, ecfg.num_layers + 1, ecfg.model_dim, init);
  model.norm.per_utterance = cfg.get_string("train.feature_norm") == "utterance";
  if (!model.norm.per_utterance && cfg.get_string("train.feature_norm") != "corpus") {
    throw ConfigError("train.feature_norm must be utterance or corpus");
  }
  if (hcfg.kind == HeadKind::LoraAdapterMfa) {
    Rng lora_rng = root.split("lora");
    for (int i = 0; i < ecfg.num_layers; ++i) {
      model.encoder.attach_lora(i, LoraTarget::Query, hcfg.lora_rank, hcfg.lora_alpha, lora_rng);
      model.encoder.attach_lora(i, LoraTarget::Value, hcfg.lora_rank, hcfg.lora_alpha, lora_rng);
    }
  }
  return model;
}

StageConfig stage_config(const RunConfig& cfg, int stage_id) {
  const std::string p = "train.stage" + std::to_string(stage_id) + ".";
  StageConfig sc;
  sc.id = stage_id;
  sc.name = stage_name_of(stage_id);
  sc.epochs = cfg.get_int(p + "epochs");
  sc.frame_min = cfg.get_index(p + "frame_min");
  sc.frame_max = cfg.get_index(p + "frame_max");
  sc.margin = cfg.get_double(p + "margin");
  sc.scale = cfg.get_double(p + "scale");
  sc.augment = cfg.get_bool(p + "augment");
  sc.speed_perturb = cfg.get_bool(p + "speed_perturb");
  sc.batch_size = cfg.get_index("train.batch_size");
  sc.weight_decay = cfg.get_double("train.weight_decay");
  sc.augment_policy = augment_policy_from(cfg);

  const std::string selector = cfg.get_string(p + "selector");
  if (selector == "auto") {
    const bool lora = head_kind_from_name(cfg.get_string("head.kind")) == HeadKind::LoraAdapterMfa;
    sc.selector = (stage_id == 1) ? (lora ? ParamSelector::HeadLora : ParamSelector::HeadOnly)
                                  : ParamSelector::All;
  } else {
    sc.selector = selector_from_name(selector);
  }

  if (stage_id == 1) {
    sc.schedule.kind = ScheduleKind::WarmupStep;
    sc.schedule.lr_start = cfg.get_double(p + "lr");
    sc.schedule.lr_end = cfg.get_double(p + "lr_floor");
    sc.schedule.warmup_epochs = cfg.get_double(p + "warmup_epochs");
    sc.schedule.decay_every = cfg.get_double(p + "decay_epochs");
    sc.schedule.decay_factor = 0.1;
  } else {
    sc.schedule.kind = ScheduleKind::Cosine;
    sc.schedule.lr_start = cfg.get_double(p + "lr");
    sc.schedule.lr_end = cfg.get_double(p + "lr_end");
    sc.schedule.cosine_epochs = cfg.get_double(p + "cosine_epochs");
  }
  return sc;
}

namespace {

struct TrainContext {
  SvModel model;
  ArcFaceParams arcface;
  int arcface_classes = 0;
};

void save_train_ckpt(const fs::path& path, const TrainContext& ctx, int stage, int epoch,
                     AdamW* opt) {
  Checkpoint ckpt = ctx.model.to_checkpoint();
  ckpt.put("arcface.W", ctx.arcface.W);
  ckpt.put_vector("meta.train",
                  {static_cast<double>(stage), static_cast<double>(epoch),
                   static_cast<double>(ctx.arcface_classes)});
  if (opt != nullptr) opt->save_into(ckpt);
  ckpt.save(path.string());
}

TrainContext load_train_ckpt(const fs::path& path) {
  Checkpoint ckpt = Checkpoint::load(path.string());
  TrainContext ctx;
  ctx.model = SvModel::from_checkpoint(ckpt);
  ctx.arcface.W = ckpt.get_tensor("arcface.W", true);
  ctx.arcface_classes = static_cast<int>(ctx.arcface.W.rows());
  return ctx;
}

// Adapts the class matrix to the class count a stage needs.
void fit_arcface_classes(TrainContext& ctx, int classes, int n_speakers, Rng& rng) {
  if (ctx.arcface.W.valid() && ctx.arcface.W.rows() == classes) {
    ctx.arcface_classes = classes;
    return;
  }
  if (ctx.arcface.W.valid() && ctx.arcface.W.rows() == 3 * n_speakers && classes == n_speakers) {
    ctx.arcface = lmft_class_subset(ctx.arcface, n_speakers);
    ctx.arcface_classes = classes;
    return;
  }
  if (ctx.arcface.W.valid() && ctx.arcface.W.rows() != classes) {
    throw ConfigError("train: checkpoint has " + std::to_string(ctx.arcface.W.rows()) +
                      " arcface classes but the stage needs " + std::to_string(classes));
  }
  ctx.arcface = make_arcface(classes, static_cast<int>(ctx.model.head.emb.W.cols()), rng);
  ctx.arcface_classes = classes;
}

}  // namespace

void cmd_train(const RunConfig& cfg, const std::vector<int>& stages_in) {
  std::vector<int> stages = stages_in;
  if (stages.empty()) stages = {1, 2, 3};
  for (std::size_t i = 1; i < stages.size(); ++i) {
    if (stages[i] <= stages[i - 1]) throw ConfigError("train: stages must be increasing");
  }

  const fs::path out = cfg.get_string("train.out_dir");
  DirLock lock(out);
  const fs::path data_dir = cfg.get_string("data.dir");
  const fs::path manifest_path = data_dir / "manifest_train.tsv";
  if (!fs::exists(manifest_path)) {
    throw ConfigError("train: missing dataset manifest " + manifest_path.string() +
                      " (run synth first)");
  }
  TrainData data = TrainData::load(load_manifest(manifest_path.string()), data_dir.string());

  const std::uint64_t seed = cfg.get_u64("seed");
  Rng root(seed);
  const std::string init_ckpt = cfg.get_string("train.init_checkpoint");

  write_text(out / "config.resolved", cfg.serialize());

  for (int stage : stages) {
    const fs::path final_path = out / ("stage" + std::to_string(stage) + ".ckpt");
    if (fs::exists(final_path)) {
      std::printf("train: stage %d already complete (%s)\n", stage, final_path.c_str());
      continue;
    }
    StageConfig sc = stage_config(cfg, stage);

    // Locate a resume point: the latest epoch checkpoint of this stage.
    int resume_epoch = -1;
    for (int e = 0; e < sc.epochs; ++e) {
      if (fs::exists(out / ("stage" + std::to_string(stage) + "_epoch" + std::to_string(e) +
                            ".ckpt"))) {
        resume_epoch = e;
      }
    }

    TrainContext ctx;
    AdamW resumed_opt;
    bool has_resumed_opt = false;
    if (resume_epoch >= 0) {
      const fs::path rp = out / ("stage" + std::to_string(stage) + "_epoch" +
                                 std::to_string(resume_epoch) + ".ckpt");
      ctx = load_train_ckpt(rp);
      auto trainable = select_trainable(ctx.model, ctx.arcface, sc.selector);
      AdamWConfig ocfg;
      ocfg.weight_decay = sc.weight_decay;
      resumed_opt = AdamW(trainable, ocfg);
      resumed_opt.load_from(Checkpoint::load(rp.string()));
      has_resumed_opt = true;
      std::printf("train: resuming stage %d from epoch %d\n", stage, resume_epoch);
    } else if (stage == 1 && init_ckpt.empty()) {
      ctx.model = build_model(cfg, seed);
      if (!ctx.model.norm.per_utterance) ctx.model.norm.stats = corpus_stats(data);
    } else {
      fs::path prev;
      if (!init_ckpt.empty() &&
          (stage == stages.front() ||
           !fs::exists(out / ("stage" + std::to_string(stage - 1) + ".ckpt")))) {
        prev = init_ckpt;
      } else {
        prev = out / ("stage" + std::to_string(stage - 1) + ".ckpt");
      }
      if (!fs::exists(prev)) {
        throw ConfigError("train: stage " + std::to_string(stage) + " needs " + prev.string() +
                          " (run the earlier stage first)");
      }
      ctx = load_train_ckpt(prev);
      // The paper folds LoRA into the base weights before joint tuning.
      if (stage >= 2 && ctx.model.encoder.has_lora()) ctx.model.encoder.merge_lora();
    }

    Rng class_rng = root.split("arcface", static_cast<std::uint64_t>(stage));
    fit_arcface_classes(ctx, data.num_classes(sc.speed_perturb), data.n_speakers, class_rng);

    Rng stage_rng = root.split("stage", static_cast<std::uint64_t>(stage));
    std::ofstream metrics(out / ("metrics_stage" + std::to_string(stage) + ".log"),
                          resume_epoch >= 0 ? std::ios::app : std::ios::trunc);

    auto on_epoch = [&](int epoch, AdamW& opt) {
      save_train_ckpt(out / ("stage" + std::to_string(stage) + "_epoch" + std::to_string(epoch) +
                             ".ckpt"),
                      ctx, stage, epoch, &opt);
    };
    StageResult res =
        run_stage(ctx.model, ctx.arcface, data, sc, stage_rng, resume_epoch + 1,
                  has_resumed_opt ? &resumed_opt : nullptr, on_epoch);
    for (const auto& line : res.metric_lines) metrics << line << '\n';
    metrics.flush();

    save_train_ckpt(final_path, ctx, stage, sc.epochs, nullptr);
    double last = res.epoch_mean_loss.empty() ? 0.0 : res.epoch_mean_loss.back();
    std::printf("train: stage %d (%s) done, %d epochs, final mean loss %.6f\n", stage,
                sc.name.c_str(), sc.epochs, last);
  }
}

// ---------------------------------------------------------------------------
// prune
// ---------------------------------------------------------------------------

PruneOutcome cmd_prune(const RunConfig& cfg) {
  const double target = cfg.get_double("prune.target");
  if (target < 0.0 || target >= 1.0) throw ConfigError("prune.target must be in [0, 1)");

  std::string teacher_path = cfg.get_string("prune.teacher");
  if (teacher_path.empty()) {
    teacher_path = (fs::path(cfg.get_string("train.out_dir")) / "stage2.ckpt").string();
  }
  if (!fs::exists(teacher_path)) {
    throw ConfigError("prune: missing teacher checkpoint \"" + teacher_path + "\"");
  }
  std::string out_str = cfg.get_string("prune.out_dir");
  if (out_str.empty()) out_str = cfg.get_string("train.out_dir");
  const fs::path out = out_str;
  DirLock lock(out);

  const fs::path data_dir = cfg.get_string("data.dir");
  TrainData data =
      TrainData::load(load_manifest((data_dir / "manifest_train.tsv").string()), data_dir.string());

  Checkpoint teacher_ckpt = Checkpoint::load(teacher_path);
  SvModel teacher = SvModel::from_checkpoint(teacher_ckpt);
  if (teacher.encoder.has_lora()) teacher.encoder.merge_lora();
  SvModel student = SvModel::from_checkpoint(teacher.to_checkpoint());
  for (auto& [name, t] : teacher.encoder.named_params()) t.set_requires_grad(false);

  std::vector<MatrixRM> features;
  features.reserve(data.waves.size());
  for (const auto& w : data.waves) features.push_back(teacher.features_for(w));

  Rng root(cfg.get_u64("seed"));
  Rng prune_rng = root.split("prune");
  GateSet gates = GateSet::make(student.encoder, cfg.get_double("prune.log_alpha_init"));
  SparsityController controller(target, cfg.get_index("prune.warmup_steps"));
  controller.lambda2.mutable_value()[0] = cfg.get_double("prune.lambda2_init");

  PruneTrainConfig pcfg;
  pcfg.steps = cfg.get_index("prune.steps");
  pcfg.batch_size = cfg.get_index("prune.batch_size");
  pcfg.lr_params = cfg.get_double("prune.lr_params");
  pcfg.lr_sparsity = cfg.get_double("prune.lr_sparsity");
  pcfg.lr_lambda = cfg.get_double("prune.lr_lambda");
  pcfg.frame_min = cfg.get_index("prune.frame_min");
  pcfg.frame_max = cfg.get_index("prune.frame_max");
  pcfg.distill.mean_l1 = cfg.get_string("prune.l1_mode") == "mean";

  std::ofstream log(out / "prune_metrics.log", std::ios::trunc);
  auto on_step = [&](Index step, double distill, double penalty, double s_hat) {
    if (step % 50 == 0 || step + 1 == pcfg.steps) {
      log << step << '\t' << distill << '\t' << penalty << '\t' << s_hat << '\n';
    }
  };

  const std::uint64_t teacher_sum_before = teacher.encoder.checksum();
  const auto t0 = std::chrono::steady_clock::now();
  PruneStats stats = prune_train(student.encoder, teacher.encoder, features, gates, controller,
                                 pcfg, prune_rng, on_step);
  const double prune_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (teacher.encoder.checksum() != teacher_sum_before) {
    throw InvariantViolation("prune: teacher parameters changed during prune_train");
  }

  // Mid-state with gates, for inspection/resume.
  {
    Checkpoint state = student.to_checkpoint();
    state.put("gate.log_alpha", gates.log_alpha);
    state.put("gate.lambda1", controller.lambda1);
    state.put("gate.lambda2", controller.lambda2);
    state.save((out / "prune_state.ckpt").string());
  }

  PruneOutcome outcome;
  outcome.prune_train_seconds = prune_seconds;
  ConformerModel extracted = extract_pruned(student.encoder, gates, &outcome.report);
  outcome.achieved_sparsity = outcome.report.achieved_sparsity();
  outcome.expected_sparsity = stats.expected_sparsity;
  outcome.final_distill = stats.final_distill;
  outcome.final_floor = stats.final_floor;

  const Index post_epochs = cfg.get_index("prune.post_distill_epochs");
  if (post_epochs > 0) {
    Rng post_rng = root.split("post_distill");
    outcome.post_distill_loss = distill_train(extracted, teacher.encoder, features, post_epochs,
                                              cfg.get_double("prune.post_distill_lr"), pcfg,
                                              post_rng);
  }

  SvModel pruned;
  pruned.encoder = std::move(extracted);
  pruned.head = student.head;
  pruned.norm = student.norm;
  Checkpoint pruned_ckpt = pruned.to_checkpoint();
  if (teacher_ckpt.has("arcface.W")) {
    pruned_ckpt.put_array("arcface.W", teacher_ckpt.get("arcface.W").shape,
                          teacher_ckpt.get("arcface.W").data);
  }
  pruned_ckpt.save((out / "pruned.ckpt").string());
  write_text(out / "prune_report.txt", outcome.report.to_text());
  std::printf("%s", outcome.report.to_text().c_str());
  std::printf("prune: expected sparsity %.4f, achieved %.4f, post-distill loss %.4f\n",
              outcome.expected_sparsity, outcome.achieved_sparsity, outcome.post_distill_loss);
  return outcome;
}

// ---------------------------------------------------------------------------
// eval / score
// ---------------------------------------------------------------------------

namespace {

struct EmbeddingBank {
  EmbeddingMap embeddings;
  std::map<std::string, double> duration_s;
};

EmbeddingBank embed_manifest(const SvModel& model, const Manifest& manifest,
                             const std::string& root) {
  EmbeddingBank bank;
  for (const auto& e : manifest) {
    const std::string full =
        e.path.starts_with("/") ? e.path : (fs::path(root) / e.path).string();
    Waveform w = read_wav(full);
    bank.embeddings[e.utt_id] = model.utterance_embedding(w);
    bank.duration_s[e.utt_id] =
        static_cast<double>(w.samples.size()) / static_cast<double>(w.sample_rate);
  }
  return bank;
}

Cohort cohort_from(const SvModel& model, const Manifest& manifest, const EmbeddingBank& bank) {
  (void)model;
  std::map<std::string, std::vector<Array>> per_speaker;
  for (const auto& e : manifest) {
    per_speaker[e.speaker_id].push_back(bank.embeddings.at(e.utt_id));
  }
  Cohort cohort;
  for (const auto& [spk, embs] : per_speaker) {
    cohort.speaker_ids.push_back(spk);
    cohort.embeddings.push_back(enroll_average(embs));
  }
  return cohort;
}

std::vector<std::vector<double>> qmf_features(const TrialList& trials,
                                              const std::vector<double>& scores,
                                              const EmbeddingBank& bank, const Cohort& cohort,
                                              int top_k) {
  std::map<std::string, SideStats> cache;
  auto stats_for = [&](const std::string& id) -> const SideStats& {
    auto it = cache.find(id);
    if (it == cache.end()) {
      it = cache.emplace(id, cohort_stats(bank.embeddings.at(id), cohort, top_k)).first;
    }
    return it->second;
  };
  std::vector<std::vector<double>> feats;
  feats.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Trial& t = trials[i];
    const SideStats& se = stats_for(t.enroll);
    const SideStats& st = stats_for(t.test);
    feats.push_back({scores[i], std::log(bank.duration_s.at(t.enroll)),
                     std::log(bank.duration_s.at(t.test)), se.mu, st.mu});
  }
  return feats;
}

std::vector<int> labels_of(const TrialList& trials) {
  std::vector<int> labels;
  labels.reserve(trials.size());
  for (const auto& t : trials) labels.push_back(t.label);
  return labels;
}

}  // namespace

std::vector<EvalRow> cmd_eval(const RunConfig& cfg) {
  const fs::path data_dir = cfg.get_string("data.dir");
  std::string ckpt_path = cfg.get_string("eval.checkpoint");
  if (ckpt_path.empty()) {
    ckpt_path = (fs::path(cfg.get_string("train.out_dir")) / "stage3.ckpt").string();
  }
  if (!fs::exists(ckpt_path)) {
    throw ConfigError("eval: missing checkpoint \"" + ckpt_path + "\"");
  }
  std::string trials_path = cfg.get_string("eval.trials");
  if (trials_path.empty()) trials_path = (data_dir / "trials.txt").string();
  if (!fs::exists(trials_path)) {
    throw ConfigError("eval: missing trial list \"" + trials_path + "\"");
  }
  std::string out_str = cfg.get_string("eval.out_dir");
  if (out_str.empty()) out_str = cfg.get_string("train.out_dir");
  const fs::path out = out_str;
  fs::create_directories(out);

  SvModel model = SvModel::from_checkpoint(Checkpoint::load(ckpt_path));
  Manifest eval_manifest = load_manifest((data_dir / "manifest_eval.tsv").string());
  EmbeddingBank bank = embed_manifest(model, eval_manifest, data_dir.string());

  // Optional enrollment map: "enroll_id utt1 utt2 ..." averaged embeddings.
  const std::string enroll_map = cfg.get_string("eval.enroll_map");
  if (!enroll_map.empty()) {
    std::ifstream is(enroll_map);
    if (!is) throw ConfigError("eval: cannot open enroll map \"" + enroll_map + "\"");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string id, utt;
      ss >> id;
      std::vector<Array> embs;
      double dur = 0.0;
      while (ss >> utt) {
        embs.push_back(bank.embeddings.at(utt));
        dur += bank.duration_s.at(utt);
      }
      bank.embeddings[id] = enroll_average(embs);
      bank.duration_s[id] = dur;
    }
  }

  // Embedding file: one tensor per utterance id.
  {
    Checkpoint embs;
    for (const auto& [id, emb] : bank.embeddings) embs.put_array(id, {emb.size()}, emb);
    embs.save((out / "embeddings.ckpt").string());
  }

  TrialList trials = load_trials(trials_path);
  std::vector<int> labels = labels_of(trials);
  std::vector<double> raw = score_trials(trials, bank.embeddings);
  save_scores((out / "scores.txt").string(), trials, raw);

  std::vector<EvalRow> rows;
  EerResult r = compute_eer(raw, labels);
  const double p_target = cfg.get_double("eval.p_target");
  const double c_miss = cfg.get_double("eval.c_miss");
  const double c_fa = cfg.get_double("eval.c_fa");
  rows.push_back({"raw", r.eer, compute_mindcf(raw, labels, p_target, c_miss, c_fa)});

  const bool use_asnorm = cfg.get_bool("eval.asnorm");
  const bool use_qmf = cfg.get_bool("eval.qmf");
  if (use_asnorm || use_qmf) {
    Manifest train_manifest = load_manifest((data_dir / "manifest_train.tsv").string());
    EmbeddingBank train_bank = embed_manifest(model, train_manifest, data_dir.string());
    Cohort cohort = cohort_from(model, train_manifest, train_bank);
    const int top_k = std::min<int>(cfg.get_int("eval.top_k"),
                                    static_cast<int>(cohort.embeddings.size()));

    std::vector<double> normalized;
    if (use_asnorm) {
      normalized = as_norm(raw, trials, bank.embeddings, cohort, top_k);
      save_scores((out / "scores_asnorm.txt").string(), trials, normalized);
      EerResult rn = compute_eer(normalized, labels);
      rows.push_back(
          {"as_norm", rn.eer, compute_mindcf(normalized, labels, p_target, c_miss, c_fa)});
    }

    if (use_qmf) {
      std::string dev_path = cfg.get_string("eval.dev_trials");
      if (dev_path.empty()) dev_path = (data_dir / "trials_dev.txt").string();
      if (!fs::exists(dev_path)) {
        throw ConfigError("eval: missing dev trial list \"" + dev_path + "\"");
      }
      TrialList dev_trials = load_trials(dev_path);
      std::vector<double> dev_raw = score_trials(dev_trials, train_bank.embeddings);
      std::vector<double> dev_base =
          use_asnorm ? as_norm(dev_raw, dev_trials, train_bank.embeddings, cohort, top_k)
                     : dev_raw;
      auto dev_feats = qmf_features(dev_trials, dev_base, train_bank, cohort, top_k);
      QmfModel qmf = qmf_fit(dev_feats, labels_of(dev_trials));

      const std::vector<double>& base = use_asnorm ? normalized : raw;
      auto eval_feats = qmf_features(trials, base, bank, cohort, top_k);
      std::vector<double> calibrated;
      calibrated.reserve(trials.size());
      for (const auto& f : eval_feats) calibrated.push_back(qmf.apply(f));
      save_scores((out / "scores_qmf.txt").string(), trials, calibrated);
      EerResult rq = compute_eer(calibrated, labels);
      rows.push_back({use_asnorm ? "as_norm+qmf" : "qmf", rq.eer,
                      compute_mindcf(calibrated, labels, p_target, c_miss, c_fa)});
    }
  }

  std::ostringstream table;
  table << "scoring        EER(%)    minDCF\n";
  char buf[96];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %-9.4f %.4f\n", row.name.c_str(), 100.0 * row.eer,
                  row.mindcf);
    table << buf;
  }
  write_text(out / "eval_metrics.txt", table.str());
  std::printf("%s", table.str().c_str());
  return rows;
}

EvalRow cmd_score(const RunConfig& cfg) {
  const std::string scores_path = cfg.get_string("score.scores");
  const std::string emb_path = cfg.get_string("score.embeddings");
  if (scores_path.empty() && emb_path.empty()) {
    throw ConfigError("score: set score.scores or score.embeddings");
  }
  std::string trials_path = cfg.get_string("eval.trials");
  if (trials_path.empty()) {
    trials_path = (fs::path(cfg.get_string("data.dir")) / "trials.txt").string();
  }
  if (!fs::exists(trials_path)) {
    throw ConfigError("score: missing trial list \"" + trials_path + "\"");
  }
  TrialList trials = load_trials(trials_path);
  std::vector<int> labels = labels_of(trials);

  std::vector<double> scores;
  if (!scores_path.empty()) {
    scores = load_scores(scores_path, trials);
  } else {
    Checkpoint embs = Checkpoint::load(emb_path);
    EmbeddingMap map;
    for (const auto& name : embs.names()) map[name] = embs.get(name).data;
    scores = score_trials(trials, map);
    const std::string out = cfg.get_string("score.out");
    if (!out.empty()) save_scores(out, trials, scores);
  }

  EerResult r = compute_eer(scores, labels);
  EvalRow row{"score", r.eer,
              compute_mindcf(scores, labels, cfg.get_double("eval.p_target"),
                             cfg.get_double("eval.c_miss"), cfg.get_double("eval.c_fa"))};
  std::printf("eer %.4f%%  mindcf %.4f  threshold %.6f\n", 100.0 * row.eer, row.mindcf,
              r.threshold);
  return row;
}

}  // namespace svf
