// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/fbank.hpp"

#include <cmath>
#include <complex>

namespace svf {

namespace {

Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Triangular mel filters as (bin, weight) lists per filter.
struct MelBank {
  Index nfft;
  std::vector<std::vector<std::pair<Index, double>>> filters;
};

MelBank make_mel_bank(const FbankConfig& cfg, Index nfft) {
  MelBank bank;
  bank.nfft = nfft;
  const Index nbins = nfft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.num_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.num_mels + 1));
  }
  bank.filters.resize(static_cast<std::size_t>(cfg.num_mels));
  for (int m = 0; m < cfg.num_mels; ++m) {
    const double f_left = edges[static_cast<std::size_t>(m)];
    const double f_center = edges[static_cast<std::size_t>(m) + 1];
    const double f_right = edges[static_cast<std::size_t>(m) + 2];
    for (Index k = 0; k < nbins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(nfft);
      double wgt = 0.0;
      if (f > f_left && f < f_center) {
        wgt = (f - f_left) / (f_center - f_left);
      } else if (f >= f_center && f < f_right) {
        wgt = (f_right - f) / (f_right - f_center);
      }
      if (wgt > 0.0) bank.filters[static_cast<std::size_t>(m)].emplace_back(k, wgt);
    }
  }
  return bank;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Index fbank_num_frames(Index num_samples, const FbankConfig& cfg) {
  const Index win = cfg.window_samples();
  const Index hop = cfg.hop_samples();
  if (num_samples < win) {
    throw ShapeError("fbank: waveform of " + std::to_string(num_samples) +
                     " samples is shorter than one " + std::to_string(win) + "-sample window");
  }
  return (num_samples - win) / hop + 1;
}

FbankFeatures fbank(const Waveform& w, const FbankConfig& cfg) {
  const Index n = static_cast<Index>(w.samples.size());
  const Index win = cfg.window_samples();
  const Index hop = cfg.hop_samples();
  const Index t_out = fbank_num_frames(n, cfg);
  const Index nfft = next_pow2(win);

  // Pre-emphasis over the whole signal.
  std::vector<double> pre(w.samples.size());
  pre[0] = w.samples[0] - cfg.preemphasis * w.samples[0];
  for (std::size_t i = 1; i < w.samples.size(); ++i) {
    pre[i] = w.samples[i] - cfg.preemphasis * w.samples[i - 1];
  }

  std::vector<double> window(static_cast<std::size_t>(win));
  for (Index i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(win - 1));
  }

  static thread_local MelBank bank{0, {}};
  if (bank.nfft != nfft || bank.filters.size() != static_cast<std::size_t>(cfg.num_mels)) {
    bank = make_mel_bank(cfg, nfft);
  }

  FbankFeatures out;
  out.frame_ms = cfg.frame_ms;
  out.hop_ms = cfg.hop_ms;
  out.frames.resize(t_out, cfg.num_mels);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(nfft));
  for (Index t = 0; t < t_out; ++t) {
    const Index off = t * hop;
    for (Index i = 0; i < win; ++i) {
      buf[static_cast<std::size_t>(i)] = pre[static_cast<std::size_t>(off + i)] *
                                         window[static_cast<std::size_t>(i)];
    }
    for (Index i = win; i < nfft; ++i) buf[static_cast<std::size_t>(i)] = 0.0;
    fft(buf);
    for (int m = 0; m < cfg.num_mels; ++m) {
      double e = 0.0;
      for (const auto& [k, wgt] : bank.filters[static_cast<std::size_t>(m)]) {
        e += wgt * std::norm(buf[static_cast<std::size_t>(k)]);
      }
      out.frames(t, m) = std::log(std::max(e, cfg.log_floor));
    }
  }
  return out;
}

FeatureStats feature_stats(const FbankFeatures& f) {
  FeatureStats s;
  const Index d = f.dim();
  s.mean = Array::Zero(d);
  s.scale = Array::Zero(d);
  for (Index j = 0; j < d; ++j) {
    const double mu = f.frames.col(j).mean();
    const double var = (f.frames.col(j).array() - mu).square().mean();
    s.mean[j] = mu;
    s.scale[j] = std::sqrt(var + FeatureStats::kVarEps);
  }
  return s;
}

FeatureStats feature_stats(const std::vector<FbankFeatures>& fs) {
  if (fs.empty()) throw ContractError("feature_stats: empty feature list");
  const Index d = fs[0].dim();
  Array sum = Array::Zero(d), sum2 = Array::Zero(d);
  double count = 0.0;
  for (const auto& f : fs) {
    if (f.dim() != d) throw ShapeError("feature_stats: inconsistent feature dims");
    for (Index j = 0; j < d; ++j) {
      sum[j] += f.frames.col(j).sum();
      sum2[j] += f.frames.col(j).array().square().sum();
    }
    count += static_cast<double>(f.num_frames());
  }
  FeatureStats s;
  s.mean = sum / count;
  s.scale = ((sum2 / count - s.mean.square()).max(0.0) + FeatureStats::kVarEps).sqrt();
  return s;
}

FbankFeatures normalize(const FbankFeatures& f, const FeatureStats& s) {
  if (s.mean.size() != f.dim()) throw ShapeError("normalize: stats dim mismatch");
  FbankFeatures out = f;
  for (Index j = 0; j < f.dim(); ++j) {
    out.frames.col(j) = (f.frames.col(j).array() - s.mean[j]) / s.scale[j];
  }
  return out;
}

FbankFeatures denormalize(const FbankFeatures& f, const FeatureStats& s) {
  if (s.mean.size() != f.dim()) throw ShapeError("denormalize: stats dim mismatch");
  FbankFeatures out = f;
  for (Index j = 0; j < f.dim(); ++j) {
    out.frames.col(j) = f.frames.col(j).array() * s.scale[j] + s.mean[j];
  }
  return out;
}

}  // namespace svf
