// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace svf {

TrialList load_trials(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_trials: cannot open \"" + path + "\"");
  TrialList out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Trial t;
    if (!(ss >> t.label >> t.enroll >> t.test) || (t.label != 0 && t.label != 1)) {
      throw IoError("load_trials: malformed line \"" + line + "\"");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_trials(const std::string& path, const TrialList& trials) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("save_trials: cannot open \"" + path + "\"");
  for (const auto& t : trials) os << t.label << ' ' << t.enroll << ' ' << t.test << '\n';
}

namespace {

struct OperatingPoint {
  double thr, far, frr;
};

// Honest-count operating points at every candidate threshold, in ascending
// threshold order (FAR non-increasing, FRR non-decreasing).
std::vector<OperatingPoint> operating_points(const std::vector<double>& scores,
                                             const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw ContractError("metrics: scores and labels must be equal-length and non-empty");
  }
  std::vector<double> tar, non;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] == 1 ? tar : non).push_back(scores[i]);
  }
  if (tar.empty() || non.empty()) {
    throw ContractError("metrics: both target and nontarget trials are required");
  }
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());

  std::vector<double> distinct(scores);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> thresholds;
  thresholds.reserve(distinct.size() + 1);
  thresholds.push_back(distinct.front() - 1.0);
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    thresholds.push_back((distinct[i] + distinct[i + 1]) / 2.0);
  }
  thresholds.push_back(distinct.back() + 1.0);

  const double n_tar = static_cast<double>(tar.size());
  const double n_non = static_cast<double>(non.size());
  std::vector<OperatingPoint> pts;
  pts.reserve(thresholds.size());
  for (double thr : thresholds) {
    // #below via binary search mirrors an honest per-trial recount.
    const auto below_tar = std::lower_bound(tar.begin(), tar.end(), thr) - tar.begin();
    const auto below_non = std::lower_bound(non.begin(), non.end(), thr) - non.begin();
    const double frr = static_cast<double>(below_tar) / n_tar;
    const double far = static_cast<double>(non.size() - static_cast<std::size_t>(below_non)) / n_non;
    pts.push_back({thr, far, frr});
  }
  return pts;
}

}  // namespace

EerResult compute_eer(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::vector<OperatingPoint> pts = operating_points(scores, labels);

  // Pareto frontier: first point of each FAR run and last of each FRR run.
  std::vector<OperatingPoint> frontier;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool first_of_far = (i == 0) || (pts[i - 1].far > pts[i].far);
    const bool last_of_frr = (i + 1 == pts.size()) || (pts[i + 1].frr > pts[i].frr);
    if (first_of_far && last_of_frr) frontier.push_back(pts[i]);
  }

  EerResult out;
  for (std::size_t k = 0; k < frontier.size(); ++k) {
    const double diff = frontier[k].far - frontier[k].frr;
    if (diff == 0.0) {
      out.eer = frontier[k].far;
      out.threshold = frontier[k].thr;
      return out;
    }
    if (diff < 0.0) {
      if (k == 0) {
        out.eer = frontier[k].frr;
        out.threshold = frontier[k].thr;
      } else {
        const double d1 = frontier[k - 1].far - frontier[k - 1].frr;
        const double d2 = diff;
        const double t = d1 / (d1 - d2);
        out.eer = frontier[k - 1].far + t * (frontier[k].far - frontier[k - 1].far);
        out.threshold = frontier[k - 1].thr + t * (frontier[k].thr - frontier[k - 1].thr);
      }
      return out;
    }
  }
  out.eer = frontier.back().far;
  out.threshold = frontier.back().thr;
  return out;
}

double compute_mindcf(const std::vector<double>& scores, const std::vector<int>& labels,
                      double p_target, double c_miss, double c_fa) {
  const std::vector<OperatingPoint> pts = operating_points(scores, labels);
  const double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    best = std::min(best, (c_miss * p_target * p.frr + c_fa * (1.0 - p_target) * p.far) / norm);
  }
  return best;
}

}  // namespace svf
