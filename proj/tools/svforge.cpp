// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// svforge: synthetic speaker-verification workbench CLI.
//
//   svforge synth  [--config C] [--set k=v] [--seed N] [--force]
//   svforge train  [--config C] [--set k=v] [--seed N] [--stages LIST]
//   svforge prune  [--config C] [--set k=v] [--seed N]
//   svforge eval   [--config C] [--set k=v] [--seed N]
//   svforge score  [--config C] [--set k=v]
//
// Exit codes: 0 ok, 1 config error, 2 runtime error, 3 invariant violation.

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "svf/pipeline.hpp"

namespace {

svf::RunConfig make_config(const std::string& config_path,
                           const std::vector<std::string>& overrides, long long seed) {
  svf::RunConfig cfg = config_path.empty() ? svf::RunConfig::defaults()
                                           : svf::RunConfig::from_file(config_path);
  for (const auto& kv : overrides) cfg.apply_override(kv);
  if (seed >= 0) cfg.set("seed", std::to_string(seed));
  return cfg;
}

std::vector<int> parse_stages(const std::string& list) {
  if (list.empty()) return {};
  std::vector<int> out;
  std::string token;
  for (char c : list + ",") {
    if (c == ',') {
      if (token == "freeze" || token == "1") out.push_back(1);
      else if (token == "joint" || token == "2") out.push_back(2);
      else if (token == "lmft" || token == "3") out.push_back(3);
      else throw svf::ConfigError("unknown stage \"" + token + "\"");
      token.clear();
    } else {
      token += c;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"svforge: speaker-verification workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string stages;
  bool force = false;

  app.add_option("--config", config_path, "config file path")->capture_default_str();
  app.add_option("--set", overrides, "override: key=value (repeatable)");
  app.add_option("--seed", seed, "root seed (overrides the config)");

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  synth->add_flag("--force", force, "overwrite an existing dataset dir");
  CLI::App* train = app.add_subcommand("train", "run the training stages");
  train->add_option("--stages", stages, "comma list: freeze,joint,lmft or 1,2,3");
  CLI::App* prune = app.add_subcommand("prune", "distillation-guided structured pruning");
  CLI::App* eval = app.add_subcommand("eval", "extract embeddings and score trials");
  CLI::App* score = app.add_subcommand("score", "score an embedding or score file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    svf::RunConfig cfg = make_config(config_path, overrides, seed);
    if (synth->parsed()) svf::cmd_synth(cfg, force);
    if (train->parsed()) svf::cmd_train(cfg, parse_stages(stages));
    if (prune->parsed()) svf::cmd_prune(cfg);
    if (eval->parsed()) svf::cmd_eval(cfg);
    if (score->parsed()) svf::cmd_score(cfg);
    return 0;
  } catch (const svf::ConfigError& e) {
    std::fprintf(stderr, "svforge: config error: %s\n", e.what());
    return 1;
  } catch (const svf::InvariantViolation& e) {
    std::fprintf(stderr, "svforge: invariant violation: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "svforge: error: %s\n", e.what());
    return 2;
  }
}
