// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Detection metrics over labeled trial scores.
//
// Thresholds are placed below the minimum score, at midpoints between
// consecutive distinct scores, and above the maximum. EER comes from the
// Pareto frontier of (FAR, FRR) operating points with linear interpolation
// at the crossing; minDCF is the exact minimum over all operating points.

#pragma once

#include <string>
#include <vector>

#include "svf/common.hpp"

namespace svf {

// One labeled trial: label 1 = target (same speaker), 0 = nontarget.
struct Trial {
  int label = 0;
  std::string enroll;
  std::string test;
};

using TrialList = std::vector<Trial>;

// Text format: "label enroll_utt test_utt" per line.
TrialList load_trials(const std::string& path);
void save_trials(const std::string& path, const TrialList& trials);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

EerResult compute_eer(const std::vector<double>& scores, const std::vector<int>& labels);

double compute_mindcf(const std::vector<double>& scores, const std::vector<int>& labels,
                      double p_target = 0.01, double c_miss = 1.0, double c_fa = 1.0);

}  // namespace svf
