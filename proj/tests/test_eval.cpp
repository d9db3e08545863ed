// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Trial scoring and metrics: EER/minDCF against the exhaustive oracle,
// AS-norm, and QMF calibration.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "svf/metrics.hpp"
#include "svf/rng.hpp"
#include "svf/scoring.hpp"

using namespace svf;

namespace {

Array random_emb(Index dim, Rng& rng) {
  Array a(dim);
  for (Index i = 0; i < dim; ++i) a[i] = rng.normal();
  return a;
}

// Random labeled score set with a controllable separation.
void random_scoreset(Rng& rng, std::size_t n, double sep, std::vector<double>* scores,
                     std::vector<int>* labels) {
  scores->clear();
  labels->clear();
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.uniform() < 0.3 ? 1 : 0;
    labels->push_back(label);
    scores->push_back(rng.normal() + (label ? sep : 0.0));
  }
  // Guarantee both classes.
  labels->at(0) = 1;
  labels->at(1) = 0;
}

}  // namespace

TEST_CASE("cosine score basics and symmetry") {
  Rng rng(121);
  Array a = random_emb(8, rng);
  CHECK(cosine_score(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Array b = Array::Zero(8);
  b[0] = 1.0;
  Array c = Array::Zero(8);
  c[1] = 1.0;
  CHECK(cosine_score(b, c) == 0.0);

  for (int rep = 0; rep < 20; ++rep) {
    Array x = random_emb(8, rng);
    Array y = random_emb(8, rng);
    const double xy = cosine_score(x, y);
    CHECK(std::abs(xy - cosine_score(y, x)) < 1e-15);
    CHECK(xy >= -1.0 - 1e-12);
    CHECK(xy <= 1.0 + 1e-12);
    // Direct-formula oracle.
    const double expect = (x * y).sum() / std::sqrt(x.square().sum() * y.square().sum());
    CHECK(xy == doctest::Approx(expect).epsilon(oracle::Tol::kCosine));
  }
  CHECK_THROWS_AS(cosine_score(Array::Zero(4), random_emb(4, rng)), NumericError);
}

TEST_CASE("enroll averaging") {
  Rng rng(122);
  Array v = random_emb(6, rng);

  // A single embedding averages to itself, normalized.
  Array one = enroll_average({v});
  CHECK(std::abs(std::sqrt(one.square().sum()) - 1.0) < 1e-12);
  CHECK(cosine_score(one, v) == doctest::Approx(1.0).epsilon(1e-12));

  // k copies give the same result.
  Array three = enroll_average({v, v, v});
  CHECK((three - one).abs().maxCoeff() < 1e-15);

  // Opposite vectors have a zero mean.
  Array neg = -v;
  CHECK_THROWS_AS(enroll_average({v, neg}), NumericError);
  CHECK_THROWS_AS(enroll_average({}), ContractError);
}

TEST_CASE("EER: separation, chance level, and the 4-trial hand case") {
  std::vector<double> sep_scores = {0.9, 0.8, 0.1, 0.2};
  std::vector<int> sep_labels = {1, 1, 0, 0};
  CHECK(compute_eer(sep_scores, sep_labels).eer == 0.0);

  // Same-distribution scores approach EER 0.5.
  Rng rng(123);
  std::vector<double> scores;
  std::vector<int> labels;
  random_scoreset(rng, 2000, 0.0, &scores, &labels);
  const double eer = compute_eer(scores, labels).eer;
  CHECK(std::abs(eer - 0.5) < 0.05);

  // Hand case: targets {0.9, 0.4}, nontargets {0.6, 0.1} -> 0.25.
  std::vector<double> hand_scores = {0.9, 0.4, 0.6, 0.1};
  std::vector<int> hand_labels = {1, 1, 0, 0};
  EerResult hand = compute_eer(hand_scores, hand_labels);
  CHECK(hand.eer == doctest::Approx(0.25).epsilon(1e-15));

  // Single-class input is rejected.
  CHECK_THROWS_AS(compute_eer({0.5, 0.6}, {1, 1}), ContractError);
}

TEST_CASE("minDCF: perfect separation, reject-all bound, hand case") {
  std::vector<double> sep_scores = {0.9, 0.8, 0.1, 0.2};
  std::vector<int> sep_labels = {1, 1, 0, 0};
  CHECK(compute_mindcf(sep_scores, sep_labels) == 0.0);

  Rng rng(124);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> scores;
    std::vector<int> labels;
    random_scoreset(rng, 300, 0.5, &scores, &labels);
    CHECK(compute_mindcf(scores, labels) <= 1.0 + 1e-12);
  }

  std::vector<double> hand_scores = {0.9, 0.4, 0.6, 0.1};
  std::vector<int> hand_labels = {1, 1, 0, 0};
  const double got = compute_mindcf(hand_scores, hand_labels);
  oracle::MetricResult expect = oracle::oracle_metric(hand_scores, hand_labels);
  CHECK(got == expect.mindcf);
  CHECK(got == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("sweep metrics equal the exhaustive oracle exactly on random sets") {
  Rng rng(125);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 20 + static_cast<std::size_t>(rng.uniform_int(980));
    std::vector<double> scores;
    std::vector<int> labels;
    random_scoreset(rng, n, rng.uniform(0.0, 2.0), &scores, &labels);
    // Quantize some scores to force ties.
    if (rep % 3 == 0) {
      for (auto& s : scores) s = std::round(s * 4.0) / 4.0;
    }
    oracle::MetricResult expect = oracle::oracle_metric(scores, labels);
    EerResult got = compute_eer(scores, labels);
    CHECK(got.eer == expect.eer);
    CHECK(got.threshold == expect.eer_threshold);
    CHECK(compute_mindcf(scores, labels) == expect.mindcf);
  }
}

TEST_CASE("EER is invariant under strictly monotone score transforms") {
  Rng rng(126);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> scores;
    std::vector<int> labels;
    random_scoreset(rng, 400, 1.0, &scores, &labels);
    const double base = compute_eer(scores, labels).eer;
    std::vector<double> warped = scores;
    for (auto& s : warped) s = std::tanh(0.7 * s) * 3.0 + 1.0;
    CHECK(compute_eer(warped, labels).eer == base);
  }
}

TEST_CASE("as_norm: plain symmetric z/s-norm at K = N_c and rank preservation") {
  Rng rng(127);
  const Index dim = 12;
  // Cohort of 8 speakers, 6 trial utterances.
  Cohort cohort;
  for (int i = 0; i < 8; ++i) {
    cohort.speaker_ids.push_back("c" + std::to_string(i));
    cohort.embeddings.push_back(random_emb(dim, rng));
  }
  EmbeddingMap embs;
  TrialList trials;
  for (int i = 0; i < 6; ++i) embs["u" + std::to_string(i)] = random_emb(dim, rng);
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      trials.push_back(Trial{(i + j) % 2, "u" + std::to_string(i), "u" + std::to_string(j)});
    }
  }
  std::vector<double> raw = score_trials(trials, embs);

  // K = N_c reduces to the plain symmetric norm; verify against a direct
  // computation.
  std::vector<double> normalized = as_norm(raw, trials, embs, cohort, 8);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto stats_of = [&](const std::string& id) {
      std::vector<double> cs;
      for (const auto& c : cohort.embeddings) cs.push_back(cosine_score(embs.at(id), c));
      double mu = 0.0;
      for (double s : cs) mu += s;
      mu /= cs.size();
      double var = 0.0;
      for (double s : cs) var += (s - mu) * (s - mu);
      var /= cs.size();
      return std::make_pair(mu, std::max(std::sqrt(var), 1e-8));
    };
    auto [mu_e, sd_e] = stats_of(trials[i].enroll);
    auto [mu_t, sd_t] = stats_of(trials[i].test);
    const double expect = 0.5 * ((raw[i] - mu_e) / sd_e + (raw[i] - mu_t) / sd_t);
    CHECK(normalized[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // With equal cohort stats for all sides the map is affine: ranks are
  // preserved and the EER is unchanged. Equal stats are arranged by
  // placing every trial embedding on a fixed-cosine cone around the single
  // cohort vector.
  Cohort cone_cohort;
  cone_cohort.speaker_ids = {"c"};
  Array axis = random_emb(dim, rng);
  axis /= std::sqrt(axis.square().sum());
  cone_cohort.embeddings = {axis};
  EmbeddingMap cone_embs;
  for (int i = 0; i < 6; ++i) {
    Array r = random_emb(dim, rng);
    r -= (r * axis).sum() * axis;  // orthogonal component
    r /= std::sqrt(r.square().sum());
    cone_embs["u" + std::to_string(i)] = 0.8 * axis + 0.6 * r;
  }
  std::vector<double> cone_raw = score_trials(trials, cone_embs);
  std::vector<double> affine = as_norm(cone_raw, trials, cone_embs, cone_cohort, 1);
  const std::vector<double>& raw_ref = cone_raw;
  std::vector<std::size_t> order_raw(raw_ref.size()), order_aff(raw_ref.size());
  for (std::size_t i = 0; i < raw_ref.size(); ++i) order_raw[i] = order_aff[i] = i;
  std::sort(order_raw.begin(), order_raw.end(),
            [&](std::size_t a, std::size_t b) { return raw_ref[a] < raw_ref[b]; });
  std::sort(order_aff.begin(), order_aff.end(),
            [&](std::size_t a, std::size_t b) { return affine[a] < affine[b]; });
  CHECK(order_raw == order_aff);

  std::vector<int> labels;
  for (const auto& t : trials) labels.push_back(t.label);
  CHECK(compute_eer(affine, labels).eer == compute_eer(raw_ref, labels).eer);
}

TEST_CASE("as_norm guards a zero-variance cohort") {
  Rng rng(128);
  const Index dim = 6;
  EmbeddingMap embs;
  embs["e"] = random_emb(dim, rng);
  embs["t"] = random_emb(dim, rng);
  TrialList trials{{1, "e", "t"}};
  Cohort degenerate;
  Array c = random_emb(dim, rng);
  degenerate.speaker_ids = {"a", "b"};
  degenerate.embeddings = {c, c};  // identical scores, sigma = 0
  std::vector<double> raw = score_trials(trials, embs);
  std::vector<double> normalized = as_norm(raw, trials, embs, degenerate, 2);
  CHECK(std::isfinite(normalized[0]));
}

TEST_CASE("qmf: monotone single-feature calibration preserves ranking and EER") {
  Rng rng(129);
  std::vector<double> scores;
  std::vector<int> labels;
  random_scoreset(rng, 200, 2.5, &scores, &labels);

  std::vector<std::vector<double>> feats;
  for (double s : scores) feats.push_back({s});
  QmfModel model = qmf_fit(feats, labels);
  std::vector<double> calibrated;
  for (const auto& f : feats) calibrated.push_back(model.apply(f));

  CHECK(model.weights[0] > 0.0);  // higher score, higher target odds
  CHECK(compute_eer(calibrated, labels).eer == compute_eer(scores, labels).eer);
}

TEST_CASE("qmf recovers generating weights on synthetic logistic data") {
  Rng rng(130);
  const int n = 10000;
  const std::vector<double> w_true = {1.5, -0.8, 0.5, 2.0, -1.2};
  const double b_true = 0.3;
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(5);
    double z = b_true;
    for (int j = 0; j < 5; ++j) {
      x[static_cast<std::size_t>(j)] = rng.normal();
      z += w_true[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    }
    const double p = 1.0 / (1.0 + std::exp(-z));
    labels.push_back(rng.uniform() < p ? 1 : 0);
    feats.push_back(std::move(x));
  }
  QmfModel model = qmf_fit(feats, labels);
  REQUIRE(model.weights.size() == 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(std::abs(model.weights[static_cast<std::size_t>(j)] -
                   w_true[static_cast<std::size_t>(j)]) <
          0.05 * std::abs(w_true[static_cast<std::size_t>(j)]) + 0.03);
  }
}

TEST_CASE("qmf drops constant features and rejects one-class data") {
  Rng rng(131);
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    const int label = i % 2;
    feats.push_back({label ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.5), 7.0});
    labels.push_back(label);
  }
  QmfModel model = qmf_fit(feats, labels);
  REQUIRE(model.kept.size() == 1);  // the constant column is gone
  CHECK(model.kept[0] == 0);

  std::vector<int> ones(labels.size(), 1);
  CHECK_THROWS_AS(qmf_fit(feats, ones), NumericError);
}

TEST_CASE("trial and score files round-trip") {
  TrialList trials{{1, "a", "b"}, {0, "a", "c"}, {1, "d", "e"}};
  const std::string tpath = "/tmp/svf_test_trials.txt";
  save_trials(tpath, trials);
  TrialList loaded = load_trials(tpath);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[1].label == 0);
  CHECK(loaded[2].enroll == "d");

  std::vector<double> scores = {0.25, -0.5, 1.0 / 3.0};
  const std::string spath = "/tmp/svf_test_scores.txt";
  save_scores(spath, trials, scores);
  std::vector<double> back = load_scores(spath, trials);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back[static_cast<std::size_t>(i)] == scores[static_cast<std::size_t>(i)]);
  std::remove(tpath.c_str());
  std::remove(spath.c_str());
}
