// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace svf {

const std::vector<std::pair<std::string, std::string>>& RunConfig::registry() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"seed", "42"},

      {"data.dir", "data/synth"},
      {"data.n_speakers", "20"},
      {"data.utts_per_speaker", "10"},
      {"data.eval_per_speaker", "3"},
      {"data.dev_per_speaker", "2"},
      {"data.min_seconds", "2.0"},
      {"data.max_seconds", "4.0"},

      {"encoder.layers", "4"},
      {"encoder.dim", "64"},
      {"encoder.ffn_dim", "256"},
      {"encoder.heads", "4"},
      {"encoder.conv_kernel", "15"},
      {"encoder.rel_radius", "64"},
      {"encoder.dropout", "0.1"},

      {"head.kind", "adapter_mfa"},
      {"head.embed_dim", "256"},
      {"head.adapter_dim", "128"},
      {"head.asp_hidden", "0"},
      {"head.ecapa_channels", "128"},
      {"head.lora_rank", "64"},
      {"head.lora_alpha", "128"},

      {"train.out_dir", "runs/default"},
      {"train.init_checkpoint", ""},
      {"train.batch_size", "32"},
      {"train.weight_decay", "1e-4"},
      {"train.feature_norm", "utterance"},
      {"train.noise_prob", "0.4"},
      {"train.reverb_prob", "0.3"},
      {"train.snr_min_db", "0"},
      {"train.snr_max_db", "15"},

      {"train.stage1.epochs", "15"},
      {"train.stage1.lr", "1e-4"},
      {"train.stage1.lr_floor", "1e-5"},
      {"train.stage1.warmup_epochs", "5"},
      {"train.stage1.decay_epochs", "5"},
      {"train.stage1.frame_min", "200"},
      {"train.stage1.frame_max", "300"},
      {"train.stage1.margin", "0.2"},
      {"train.stage1.scale", "32"},
      {"train.stage1.augment", "true"},
      {"train.stage1.speed_perturb", "true"},
      {"train.stage1.selector", "auto"},

      {"train.stage2.epochs", "4"},
      {"train.stage2.cosine_epochs", "2"},
      {"train.stage2.lr", "1e-5"},
      {"train.stage2.lr_end", "5e-6"},
      {"train.stage2.frame_min", "200"},
      {"train.stage2.frame_max", "300"},
      {"train.stage2.margin", "0.2"},
      {"train.stage2.scale", "32"},
      {"train.stage2.augment", "true"},
      {"train.stage2.speed_perturb", "true"},
      {"train.stage2.selector", "all"},

      {"train.stage3.epochs", "2"},
      {"train.stage3.cosine_epochs", "1"},
      {"train.stage3.lr", "1e-5"},
      {"train.stage3.lr_end", "5e-6"},
      {"train.stage3.frame_min", "500"},
      {"train.stage3.frame_max", "600"},
      {"train.stage3.margin", "0.5"},
      {"train.stage3.scale", "32"},
      {"train.stage3.augment", "false"},
      {"train.stage3.speed_perturb", "false"},
      {"train.stage3.selector", "all"},

      {"prune.teacher", ""},
      {"prune.out_dir", ""},
      {"prune.target", "0.5"},
      {"prune.steps", "2000"},
      {"prune.warmup_steps", "500"},
      {"prune.batch_size", "1"},
      {"prune.lr_params", "2e-4"},
      {"prune.lr_sparsity", "2e-2"},
      {"prune.lr_lambda", "2.0"},
      {"prune.lambda2_init", "50"},
      {"prune.log_alpha_init", "2.2"},
      {"prune.frame_min", "150"},
      {"prune.frame_max", "250"},
      {"prune.l1_mode", "mean"},
      {"prune.post_distill_epochs", "2"},
      {"prune.post_distill_lr", "2e-4"},

      {"eval.checkpoint", ""},
      {"eval.trials", ""},
      {"eval.dev_trials", ""},
      {"eval.enroll_map", ""},
      {"eval.asnorm", "true"},
      {"eval.qmf", "true"},
      {"eval.top_k", "300"},
      {"eval.p_target", "0.01"},
      {"eval.c_miss", "1"},
      {"eval.c_fa", "1"},
      {"eval.out_dir", ""},

      {"score.embeddings", ""},
      {"score.scores", ""},
      {"score.out", ""},
  };
  return keys;
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& [k, v] : registry()) cfg.values_[k] = v;
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg = defaults();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file \"" + path + "\"");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

void RunConfig::apply_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key=value, got \"" + assignment + "\"");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (values_.find(key) == values_.end()) {
    // Tolerate setting before defaults() when used internally.
    bool known = false;
    for (const auto& [k, v] : registry()) {
      if (k == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key \"" + key + "\"");
  }
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  return values_.find(key) != values_.end();
}

const std::string& RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key \"" + key + "\"");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get_string(key);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key \"" + key + "\": \"" + v + "\" is not a number");
  }
  return out;
}

int RunConfig::get_int(const std::string& key) const {
  const double d = get_double(key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw ConfigError("config key \"" + key + "\" must be an integer");
  }
  return i;
}

Index RunConfig::get_index(const std::string& key) const {
  return static_cast<Index>(get_int(key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get_string(key);
  char* end = nullptr;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key \"" + key + "\" must be a non-negative integer");
  }
  return static_cast<std::uint64_t>(out);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key \"" + key + "\" must be a boolean, got \"" + v + "\"");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace svf
