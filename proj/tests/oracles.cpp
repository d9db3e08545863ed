// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace svf::oracle {

MatrixRM naive_matmul(const MatrixRM& a, const MatrixRM& b) {
  MatrixRM c = MatrixRM::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Array naive_softmax(const Array& x) {
  Array y(x.size());
  double mx = x[0];
  for (Index i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
  double s = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    s += y[i];
  }
  for (Index i = 0; i < x.size(); ++i) y[i] /= s;
  return y;
}

MatrixRM naive_weighted_average(const std::vector<MatrixRM>& stack, const Array& w) {
  const Array sw = naive_softmax(w);
  MatrixRM out = MatrixRM::Zero(stack[0].rows(), stack[0].cols());
  for (std::size_t i = 0; i < stack.size(); ++i) {
    for (Index r = 0; r < out.rows(); ++r) {
      for (Index c = 0; c < out.cols(); ++c) out(r, c) += sw[static_cast<Index>(i)] * stack[i](r, c);
    }
  }
  return out;
}

Array naive_asp(const MatrixRM& x, const MatrixRM& w, const Array& b, const Array& v,
                double eps) {
  const Index t = x.rows(), c = x.cols(), hid = w.cols();
  Array logits(t);
  for (Index i = 0; i < t; ++i) {
    double e = 0.0;
    for (Index h = 0; h < hid; ++h) {
      double pre = b[h];
      for (Index j = 0; j < c; ++j) pre += x(i, j) * w(j, h);
      e += v[h] * std::tanh(pre);
    }
    logits[i] = e;
  }
  const Array alpha = naive_softmax(logits);
  Array out(2 * c);
  for (Index j = 0; j < c; ++j) {
    double mu = 0.0, m2 = 0.0;
    for (Index i = 0; i < t; ++i) {
      mu += alpha[i] * x(i, j);
      m2 += alpha[i] * x(i, j) * x(i, j);
    }
    out[j] = mu;
    out[c + j] = std::sqrt(std::max(m2 - mu * mu, eps));
  }
  return out;
}

double naive_distill(const std::vector<MatrixRM>& teacher, const std::vector<MatrixRM>& student,
                     bool mean_l1, double eps) {
  double total = 0.0;
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    const MatrixRM& a = teacher[l];
    const MatrixRM& b = student[l];
    for (Index i = 0; i < a.rows(); ++i) {
      double l1 = 0.0, dot = 0.0, sa = 0.0, sb = 0.0;
      for (Index j = 0; j < a.cols(); ++j) {
        l1 += std::abs(a(i, j) - b(i, j));
        dot += a(i, j) * b(i, j);
        sa += a(i, j) * a(i, j);
        sb += b(i, j) * b(i, j);
      }
      if (mean_l1) l1 /= static_cast<double>(a.cols());
      const double cosine = dot / std::sqrt(std::max(sa * sb, eps * eps));
      total += l1 - cosine;
    }
  }
  return total;
}

double naive_expected_l0(const std::vector<double>& log_alpha,
                         const std::vector<double>& param_counts, double beta, double gamma_low,
                         double zeta_high) {
  double total = 0.0;
  for (std::size_t j = 0; j < log_alpha.size(); ++j) {
    const double shift = beta * std::log(-gamma_low / zeta_high);
    const double p_open = 1.0 / (1.0 + std::exp(-(log_alpha[j] - shift)));
    total += param_counts[j] * p_open;
  }
  return total;
}

MetricResult oracle_metric(const std::vector<double>& scores, const std::vector<int>& labels,
                           double p_target, double c_miss, double c_fa) {
  std::size_t n_tar = 0, n_non = 0;
  for (int l : labels) (l == 1 ? n_tar : n_non)++;
  if (n_tar == 0 || n_non == 0) {
    throw ContractError("oracle_metric: both classes must be present");
  }

  // Candidate thresholds: below min, midpoints of consecutive distinct
  // scores, above max.
  std::set<double> distinct(scores.begin(), scores.end());
  std::vector<double> sorted(distinct.begin(), distinct.end());
  std::vector<double> thresholds;
  thresholds.push_back(sorted.front() - 1.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    thresholds.push_back((sorted[i] + sorted[i + 1]) / 2.0);
  }
  thresholds.push_back(sorted.back() + 1.0);

  // Brute-force recount at every threshold.
  struct Point {
    double thr, far, frr;
  };
  std::vector<Point> pts;
  for (double thr : thresholds) {
    std::size_t fa = 0, fr = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] == 1 && scores[i] < thr) fr++;
      if (labels[i] == 0 && scores[i] >= thr) fa++;
    }
    pts.push_back({thr, static_cast<double>(fa) / static_cast<double>(n_non),
                   static_cast<double>(fr) / static_cast<double>(n_tar)});
  }

  // minDCF over all operating points.
  const double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  double mindcf = std::numeric_limits<double>::infinity();
  for (const Point& p : pts) {
    mindcf = std::min(mindcf, (c_miss * p_target * p.frr + c_fa * (1.0 - p_target) * p.far) / norm);
  }

  // Pareto frontier (quadratic scan; any dominated point is removed).
  std::vector<Point> frontier;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      if (j == i) continue;
      if (pts[j].far <= pts[i].far && pts[j].frr <= pts[i].frr &&
          (pts[j].far < pts[i].far || pts[j].frr < pts[i].frr)) {
        dominated = true;
      }
    }
    if (!dominated) frontier.push_back(pts[i]);
  }
  std::sort(frontier.begin(), frontier.end(), [](const Point& a, const Point& b) {
    if (a.far != b.far) return a.far > b.far;
    return a.frr < b.frr;
  });
  // Deduplicate identical operating points.
  frontier.erase(std::unique(frontier.begin(), frontier.end(),
                             [](const Point& a, const Point& b) {
                               return a.far == b.far && a.frr == b.frr;
                             }),
                 frontier.end());

  double eer = 0.0, eer_thr = 0.0;
  bool found = false;
  for (std::size_t k = 0; k < frontier.size() && !found; ++k) {
    const double diff = frontier[k].far - frontier[k].frr;
    if (diff == 0.0) {
      eer = frontier[k].far;
      eer_thr = frontier[k].thr;
      found = true;
    } else if (diff < 0.0) {
      if (k == 0) {
        eer = frontier[k].frr;
        eer_thr = frontier[k].thr;
      } else {
        const double d1 = frontier[k - 1].far - frontier[k - 1].frr;
        const double d2 = diff;
        const double t = d1 / (d1 - d2);
        eer = frontier[k - 1].far + t * (frontier[k].far - frontier[k - 1].far);
        eer_thr = frontier[k - 1].thr + t * (frontier[k].thr - frontier[k - 1].thr);
      }
      found = true;
    }
  }
  if (!found && !frontier.empty()) {
    eer = frontier.back().far;
    eer_thr = frontier.back().thr;
  }
  return {eer, eer_thr, mindcf};
}

Array finite_diff_grad(const std::function<double(const Array&)>& f, const Array& x,
                       double step) {
  Array g(x.size());
  Array probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double hi = f(probe);
    probe[i] = orig - step;
    const double lo = f(probe);
    probe[i] = orig;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

double max_rel_err(const Array& analytic, const Array& numeric) {
  const double scale = std::max({analytic.abs().maxCoeff(), numeric.abs().maxCoeff(), 1e-10});
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-3 * scale});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& make_loss,
                  std::vector<Tensor> leaves, double step) {
  for (auto& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Graph g;
    Recording rec(g);
    Tensor loss = make_loss(leaves);
    g.backward(loss);
  }
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const Array analytic = leaf.grad();
    auto eval = [&](const Array& x) {
      Array saved = leaf.mutable_value();
      leaf.mutable_value() = x;
      const double out = make_loss(leaves).item();
      leaf.mutable_value() = saved;
      return out;
    };
    const Array numeric = finite_diff_grad(eval, leaf.value(), step);
    worst = std::max(worst, max_rel_err(analytic, numeric));
  }
  return worst;
}

}  // namespace svf::oracle
