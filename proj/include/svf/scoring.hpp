// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Trial scoring: cosine backend with enrollment averaging, adaptive score
// normalization against a cohort, and QMF calibration by logistic
// regression.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "svf/metrics.hpp"
#include "svf/tensor.hpp"

namespace svf {

using EmbeddingMap = std::map<std::string, Array>;

// Dot product of length-normalized vectors, in [-1, 1].
double cosine_score(const Array& a, const Array& b);

// Arithmetic mean then length normalization. Empty input or a zero-norm
// mean (opposite vectors) is an error.
Array enroll_average(const std::vector<Array>& embeddings);

// Raw cosine scores for every trial; ids must resolve in the map.
std::vector<double> score_trials(const TrialList& trials, const EmbeddingMap& embeddings);

// Score file: "enroll_utt test_utt score" per line, aligned with a trial list.
void save_scores(const std::string& path, const TrialList& trials,
                 const std::vector<double>& scores);
std::vector<double> load_scores(const std::string& path, const TrialList& trials);

struct Cohort {
  std::vector<std::string> speaker_ids;
  std::vector<Array> embeddings;  // one averaged embedding per cohort speaker
};

// Per-side statistics used by AS-norm and exported as QMF quality features.
struct SideStats {
  double mu = 0.0;
  double sigma = 1.0;
};

// Top-K most-similar cohort statistics for one embedding.
SideStats cohort_stats(const Array& emb, const Cohort& cohort, int top_k);

// Symmetric adaptive s-norm:
//   0.5 * ((s - mu_e)/sigma_e + (s - mu_t)/sigma_t)
// with an eps guard on degenerate sigmas.
std::vector<double> as_norm(const std::vector<double>& raw, const TrialList& trials,
                            const EmbeddingMap& embeddings, const Cohort& cohort, int top_k);

// Logistic-regression calibration model over quality features.
struct QmfModel {
  std::vector<double> weights;  // over kept feature columns
  double bias = 0.0;
  std::vector<int> kept;  // surviving feature column indices

  double apply(const std::vector<double>& features) const;
};

// Newton/IRLS fit to gradient infinity-norm < tol (with a tiny ridge for
// well-posedness on separable data). Constant feature columns are dropped
// with a warning; a single-class label set is an error.
QmfModel qmf_fit(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 int max_iter = 200, double tol = 1e-6);

}  // namespace svf
