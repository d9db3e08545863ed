// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

namespace svf {

double cosine_score(const Array& a, const Array& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_score: dimension mismatch");
  const double na = std::sqrt(a.square().sum());
  const double nb = std::sqrt(b.square().sum());
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_score: zero-norm embedding");
  return (a * b).sum() / (na * nb);
}

Array enroll_average(const std::vector<Array>& embeddings) {
  if (embeddings.empty()) throw ContractError("enroll_average: empty embedding set");
  Array mean = embeddings[0];
  for (std::size_t i = 1; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != mean.size()) {
      throw ShapeError("enroll_average: inconsistent embedding dims");
    }
    mean += embeddings[i];
  }
  mean /= static_cast<double>(embeddings.size());
  const double norm = std::sqrt(mean.square().sum());
  if (norm < 1e-12) throw NumericError("enroll_average: zero-norm mean embedding");
  return mean / norm;
}

namespace {

const Array& lookup(const EmbeddingMap& embeddings, const std::string& id) {
  auto it = embeddings.find(id);
  if (it == embeddings.end()) throw IoError("scoring: no embedding for \"" + id + "\"");
  return it->second;
}

}  // namespace

std::vector<double> score_trials(const TrialList& trials, const EmbeddingMap& embeddings) {
  std::vector<double> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    out.push_back(cosine_score(lookup(embeddings, t.enroll), lookup(embeddings, t.test)));
  }
  return out;
}

void save_scores(const std::string& path, const TrialList& trials,
                 const std::vector<double>& scores) {
  if (trials.size() != scores.size()) throw ContractError("save_scores: length mismatch");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("save_scores: cannot open \"" + path + "\"");
  char buf[64];
  for (std::size_t i = 0; i < trials.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", scores[i]);
    os << trials[i].enroll << ' ' << trials[i].test << ' ' << buf << '\n';
  }
}

std::vector<double> load_scores(const std::string& path, const TrialList& trials) {
  std::ifstream is(path);
  if (!is) throw IoError("load_scores: cannot open \"" + path + "\"");
  std::vector<double> out;
  std::string line;
  std::size_t i = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string enroll, test;
    double score;
    if (!(ss >> enroll >> test >> score)) {
      throw IoError("load_scores: malformed line \"" + line + "\"");
    }
    if (i >= trials.size() || trials[i].enroll != enroll || trials[i].test != test) {
      throw IoError("load_scores: line " + std::to_string(i) + " does not match the trial list");
    }
    out.push_back(score);
    ++i;
  }
  if (i != trials.size()) throw IoError("load_scores: trial count mismatch");
  return out;
}

SideStats cohort_stats(const Array& emb, const Cohort& cohort, int top_k) {
  if (cohort.embeddings.empty()) throw ContractError("as_norm: empty cohort");
  const int k = std::min<int>(top_k, static_cast<int>(cohort.embeddings.size()));
  if (k < 1) throw ContractError("as_norm: top_k must be >= 1");
  std::vector<double> scores;
  scores.reserve(cohort.embeddings.size());
  for (const auto& c : cohort.embeddings) scores.push_back(cosine_score(emb, c));
  std::partial_sort(scores.begin(), scores.begin() + k, scores.end(), std::greater<double>());
  double mu = 0.0;
  for (int i = 0; i < k; ++i) mu += scores[static_cast<std::size_t>(i)];
  mu /= k;
  double var = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = scores[static_cast<std::size_t>(i)] - mu;
    var += d * d;
  }
  var /= k;
  SideStats s;
  s.mu = mu;
  s.sigma = std::max(std::sqrt(var), 1e-8);  // degenerate-cohort guard
  return s;
}

std::vector<double> as_norm(const std::vector<double>& raw, const TrialList& trials,
                            const EmbeddingMap& embeddings, const Cohort& cohort, int top_k) {
  if (raw.size() != trials.size()) throw ContractError("as_norm: length mismatch");
  std::map<std::string, SideStats> cache;
  auto stats_for = [&](const std::string& id) -> const SideStats& {
    auto it = cache.find(id);
    if (it == cache.end()) {
      it = cache.emplace(id, cohort_stats(lookup(embeddings, id), cohort, top_k)).first;
    }
    return it->second;
  };
  std::vector<double> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const SideStats& se = stats_for(trials[i].enroll);
    const SideStats& st = stats_for(trials[i].test);
    out.push_back(0.5 * ((raw[i] - se.mu) / se.sigma + (raw[i] - st.mu) / st.sigma));
  }
  return out;
}

double QmfModel::apply(const std::vector<double>& features) const {
  double z = bias;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    z += weights[i] * features[static_cast<std::size_t>(kept[i])];
  }
  return z;
}

QmfModel qmf_fit(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 int max_iter, double tol) {
  if (features.empty() || features.size() != labels.size()) {
    throw ContractError("qmf_fit: empty or mismatched training data");
  }
  bool has_pos = false, has_neg = false;
  for (int l : labels) (l == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw NumericError("qmf_fit: both classes are required to fit the calibration model");
  }
  const int dim = static_cast<int>(features[0].size());
  const Index n = static_cast<Index>(features.size());

  // Drop constant feature columns.
  QmfModel model;
  for (int j = 0; j < dim; ++j) {
    const double first = features[0][static_cast<std::size_t>(j)];
    bool constant = true;
    for (const auto& row : features) {
      if (row[static_cast<std::size_t>(j)] != first) {
        constant = false;
        break;
      }
    }
    if (constant) {
      std::fprintf(stderr, "svforge: qmf: dropping constant feature column %d\n", j);
    } else {
      model.kept.push_back(j);
    }
  }
  const Index d = static_cast<Index>(model.kept.size()) + 1;  // + bias

  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Index j = 0; j + 1 < d; ++j) {
      x(i, j + 1) = features[static_cast<std::size_t>(i)]
                            [static_cast<std::size_t>(model.kept[static_cast<std::size_t>(j)])];
    }
    y[i] = static_cast<double>(labels[static_cast<std::size_t>(i)]);
  }

  const double ridge = 1e-6;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::VectorXd z = x * w;
    Eigen::VectorXd p = (1.0 + (-z.array()).exp()).inverse().matrix();
    Eigen::VectorXd grad = x.transpose() * (p - y) + ridge * w;
    if (grad.lpNorm<Eigen::Infinity>() < tol) break;
    Eigen::VectorXd r = (p.array() * (1.0 - p.array())).max(1e-10).matrix();
    Eigen::MatrixXd hess = x.transpose() * r.asDiagonal() * x;
    hess.diagonal().array() += ridge;
    w -= hess.ldlt().solve(grad);
  }
  model.bias = w[0];
  model.weights.assign(w.data() + 1, w.data() + d);
  return model;
}

}  // namespace svf
