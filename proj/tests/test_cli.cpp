// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Config parsing/round-trip and CLI command behavior (run against the
// built binary for exit codes).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "svf/config.hpp"
#include "svf/metrics.hpp"
#include "svf/wav.hpp"
#include "svf/pipeline.hpp"

using namespace svf;
namespace fs = std::filesystem;

#ifndef SVFORGE_BIN
#define SVFORGE_BIN "svforge"
#endif

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SVFORGE_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config: defaults, round trip, unknown keys, overrides") {
  RunConfig cfg = RunConfig::defaults();
  CHECK(cfg.get_int("encoder.layers") == 4);
  CHECK(cfg.get_double("train.weight_decay") == 1e-4);
  CHECK(cfg.get_bool("train.stage3.augment") == false);
  CHECK(cfg.get_string("head.kind") == "adapter_mfa");

  // parse(serialize(x)) == x
  const std::string text = cfg.serialize();
  RunConfig back = RunConfig::parse(text);
  CHECK(back.serialize() == text);

  // Comments and blank lines are fine; unknown keys are rejected.
  RunConfig with_comment = RunConfig::parse("# a comment\nencoder.dim = 128\n\n");
  CHECK(with_comment.get_int("encoder.dim") == 128);
  CHECK_THROWS_AS(RunConfig::parse("no.such.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("bogus"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("also.bogus=3"), ConfigError);

  cfg.apply_override("encoder.dim=96");
  CHECK(cfg.get_int("encoder.dim") == 96);

  CHECK_THROWS_AS(cfg.get_int("head.kind"), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("encoder.dim"), ConfigError);
}

TEST_CASE("synth is a pure function of config and seed") {
  const fs::path dir_a = "/tmp/svf_cli_synth_a";
  const fs::path dir_b = "/tmp/svf_cli_synth_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  RunConfig cfg = RunConfig::defaults();
  cfg.set("seed", "7");
  cfg.set("data.n_speakers", "3");
  cfg.set("data.utts_per_speaker", "4");
  cfg.set("data.eval_per_speaker", "2");
  cfg.set("data.dev_per_speaker", "2");
  cfg.set("data.min_seconds", "1.0");
  cfg.set("data.max_seconds", "1.4");

  cfg.set("data.dir", dir_a.string());
  cmd_synth(cfg, false);
  cfg.set("data.dir", dir_b.string());
  cmd_synth(cfg, false);

  // Identical manifests, trials and waveforms.
  CHECK(file_bytes(dir_a / "manifest_train.tsv") == file_bytes(dir_b / "manifest_train.tsv"));
  CHECK(file_bytes(dir_a / "trials.txt") == file_bytes(dir_b / "trials.txt"));
  CHECK(file_bytes(dir_a / "wav/spk001_utt002.wav") == file_bytes(dir_b / "wav/spk001_utt002.wav"));

  // Counting: 3 speakers x 4 utts, 2 eval each -> 6 train lines.
  Manifest train = load_manifest((dir_a / "manifest_train.tsv").string());
  Manifest eval = load_manifest((dir_a / "manifest_eval.tsv").string());
  CHECK(train.size() == 6);
  CHECK(eval.size() == 6);

  // Utterance durations respect the configured range.
  for (const auto& e : train) {
    Waveform w = read_wav((dir_a / e.path).string());
    const double dur = static_cast<double>(w.samples.size()) / w.sample_rate;
    CHECK(dur >= 1.0);
    CHECK(dur <= 1.4);
  }

  // Trial list contains both labels.
  TrialList trials = load_trials((dir_a / "trials.txt").string());
  bool pos = false, neg = false;
  for (const auto& t : trials) (t.label ? pos : neg) = true;
  CHECK(pos);
  CHECK(neg);

  // Existing non-empty dir without --force is a config error.
  CHECK_THROWS_AS(cmd_synth(cfg, false), ConfigError);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("cli exit codes: ok, config error, runtime error") {
  const fs::path dir = "/tmp/svf_cli_exit";
  const fs::path scratch = "/tmp/svf_cli_exit_scratch";
  fs::remove_all(dir);
  fs::remove_all(scratch);

  // Unknown config key -> 1.
  CHECK(run_cli("synth --set no.such.key=3") == 1);
  // Bad stage list -> 1.
  CHECK(run_cli("train --stages lmft,freeze --set data.dir=" + scratch.string() +
                " --set train.out_dir=" + (scratch / "run").string()) == 1);
  // Missing dataset -> 1 (config error: run synth first).
  CHECK(run_cli("train --set data.dir=/tmp/svf_cli_does_not_exist --set train.out_dir=" +
                (scratch / "run").string()) == 1);
  // Missing checkpoint for eval -> 1.
  CHECK(run_cli("eval --set data.dir=/tmp/svf_cli_does_not_exist --set train.out_dir=" +
                (scratch / "run").string()) == 1);
  // score without inputs -> 1.
  CHECK(run_cli("score --set data.dir=/tmp/svf_cli_does_not_exist") == 1);

  // Small full synth run -> 0.
  CHECK(run_cli("synth --seed 7 --set data.dir=" + dir.string() +
                " --set data.n_speakers=3 --set data.utts_per_speaker=4"
                " --set data.eval_per_speaker=2 --set data.dev_per_speaker=2"
                " --set data.min_seconds=1.0 --set data.max_seconds=1.3") == 0);
  // Re-running without --force -> 1; with --force -> 0.
  CHECK(run_cli("synth --seed 7 --set data.dir=" + dir.string() +
                " --set data.n_speakers=3 --set data.utts_per_speaker=4"
                " --set data.eval_per_speaker=2 --set data.dev_per_speaker=2"
                " --set data.min_seconds=1.0 --set data.max_seconds=1.3") == 1);
  CHECK(run_cli("synth --seed 7 --force --set data.dir=" + dir.string() +
                " --set data.n_speakers=3 --set data.utts_per_speaker=4"
                " --set data.eval_per_speaker=2 --set data.dev_per_speaker=2"
                " --set data.min_seconds=1.0 --set data.max_seconds=1.3") == 0);

  fs::remove_all(dir);
  fs::remove_all(scratch);
}

TEST_CASE("config file + --set --seed flow through the binary") {
  const fs::path dir = "/tmp/svf_cli_cfgfile";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "exp.cfg");
    os << "# experiment config\n";
    os << "data.dir = " << (dir / "data").string() << "\n";
    os << "data.n_speakers = 3\n";
    os << "data.utts_per_speaker = 3\n";
    os << "data.eval_per_speaker = 1\n";
    os << "data.dev_per_speaker = 1\n";
    os << "data.min_seconds = 1.0\n";
    os << "data.max_seconds = 1.2\n";
  }
  // eval_per_speaker=1 cannot produce target trials -> invariant violation (3).
  CHECK(run_cli("synth --config " + (dir / "exp.cfg").string() + " --seed 9") == 3);
  // Overriding to 2 fixes it.
  CHECK(run_cli("synth --config " + (dir / "exp.cfg").string() +
                " --seed 9 --set data.eval_per_speaker=2 --force") == 0);
  fs::remove_all(dir);
}

TEST_CASE("score command reproduces eval metrics from the score file") {
  const fs::path data = "/tmp/svf_cli_score_data";
  const fs::path run = "/tmp/svf_cli_score_run";
  fs::remove_all(data);
  fs::remove_all(run);

  RunConfig cfg = RunConfig::defaults();
  cfg.set("seed", "11");
  cfg.set("data.dir", data.string());
  cfg.set("data.n_speakers", "3");
  cfg.set("data.utts_per_speaker", "5");
  cfg.set("data.eval_per_speaker", "2");
  cfg.set("data.dev_per_speaker", "2");
  cfg.set("data.min_seconds", "1.0");
  cfg.set("data.max_seconds", "1.4");
  cfg.set("encoder.layers", "2");
  cfg.set("encoder.dim", "16");
  cfg.set("encoder.ffn_dim", "24");
  cfg.set("encoder.heads", "2");
  cfg.set("encoder.conv_kernel", "5");
  cfg.set("encoder.rel_radius", "16");
  cfg.set("head.adapter_dim", "16");
  cfg.set("head.embed_dim", "32");
  cfg.set("train.batch_size", "4");
  cfg.set("train.out_dir", run.string());
  cfg.set("train.stage1.epochs", "1");
  cfg.set("train.stage1.frame_min", "60");
  cfg.set("train.stage1.frame_max", "90");
  cmd_synth(cfg, false);
  cmd_train(cfg, {1});
  cfg.set("eval.checkpoint", (run / "stage1.ckpt").string());
  std::vector<EvalRow> rows = cmd_eval(cfg);
  REQUIRE(!rows.empty());

  // Metrics recomputed from the written score file match the eval rows.
  RunConfig scfg = cfg;
  scfg.set("score.scores", (run / "scores.txt").string());
  EvalRow row = cmd_score(scfg);
  CHECK(row.eer == rows[0].eer);
  CHECK(row.mindcf == rows[0].mindcf);

  // The same works straight from the embedding file.
  RunConfig ecfg = cfg;
  ecfg.set("score.embeddings", (run / "embeddings.ckpt").string());
  EvalRow row2 = cmd_score(ecfg);
  CHECK(row2.eer == rows[0].eer);
  CHECK(row2.mindcf == rows[0].mindcf);

  // Re-running eval yields identical metrics (pure function of inputs).
  std::vector<EvalRow> rows2 = cmd_eval(cfg);
  REQUIRE(rows2.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows2[i].eer == rows[i].eer);
    CHECK(rows2[i].mindcf == rows[i].mindcf);
  }

  fs::remove_all(data);
  fs::remove_all(run);
}
