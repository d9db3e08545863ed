// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/augment.hpp"

#include <cmath>

namespace svf {

Waveform peak_normalize(Waveform w) {
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    for (double& s : w.samples) s /= peak;
  }
  return w;
}

Waveform add_noise_at_snr(const Waveform& w, const std::vector<double>& noise, double snr_db) {
  if (noise.size() < w.samples.size()) {
    throw ContractError("add_noise_at_snr: noise shorter than signal");
  }
  double p_sig = 0.0, p_noise = 0.0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    p_sig += w.samples[i] * w.samples[i];
    p_noise += noise[i] * noise[i];
  }
  p_sig /= static_cast<double>(w.samples.size());
  p_noise /= static_cast<double>(w.samples.size());
  if (p_noise <= 0.0 || p_sig <= 0.0) return w;
  const double gain = std::sqrt(p_sig / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out = w;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += gain * noise[i];
  return peak_normalize(std::move(out));
}

std::vector<double> make_noise(Index n, bool babble, Rng& rng) {
  std::vector<double> out(static_cast<std::size_t>(n));
  if (!babble) {
    for (auto& s : out) s = rng.normal() * 0.3;
    return out;
  }
  // Babble-like: low-passed white noise with slow amplitude modulation.
  const double alpha = rng.uniform(0.92, 0.985);
  const double am_rate = rng.uniform(2.0, 6.0);
  const double am_phase = rng.uniform(0.0, 2.0 * M_PI);
  double state = 0.0;
  for (Index i = 0; i < n; ++i) {
    state = alpha * state + (1.0 - alpha) * rng.normal();
    const double am = 0.6 + 0.4 * std::sin(2.0 * M_PI * am_rate * static_cast<double>(i) / 16000.0 + am_phase);
    out[static_cast<std::size_t>(i)] = 4.0 * state * am;
  }
  return out;
}

std::vector<double> make_rir(double rt60_s, int sample_rate, Rng& rng) {
  const Index len = std::max<Index>(8, static_cast<Index>(rt60_s * sample_rate));
  std::vector<double> h(static_cast<std::size_t>(len));
  // Amplitude envelope reaching -60 dB at rt60.
  const double decay = 3.0 * std::log(10.0) / (rt60_s * sample_rate);
  double energy = 0.0;
  for (Index i = 0; i < len; ++i) {
    h[static_cast<std::size_t>(i)] = rng.normal() * std::exp(-decay * static_cast<double>(i));
    energy += h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
  }
  const double inv = 1.0 / std::sqrt(energy);
  for (auto& v : h) v *= inv;
  return h;
}

Waveform apply_reverb(const Waveform& w, const std::vector<double>& rir) {
  if (rir.empty()) throw ContractError("apply_reverb: empty impulse response");
  Waveform out = w;
  const std::size_t n = w.samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const std::size_t kmax = std::min(rir.size() - 1, i);
    for (std::size_t k = 0; k <= kmax; ++k) acc += rir[k] * w.samples[i - k];
    out.samples[i] = acc;
  }
  return peak_normalize(std::move(out));
}

Waveform augment(const Waveform& w, const AugmentPolicy& policy, Rng& rng) {
  if (!policy.enabled) return w;
  const double u = rng.uniform();
  if (u < policy.noise_prob) {
    const double snr = rng.uniform(policy.snr_min_db, policy.snr_max_db);
    const bool babble = rng.uniform() < policy.babble_prob;
    const auto noise = make_noise(static_cast<Index>(w.samples.size()), babble, rng);
    return add_noise_at_snr(w, noise, snr);
  }
  if (u < policy.noise_prob + policy.reverb_prob) {
    const double rt60 = rng.uniform(policy.rt60_min_s, policy.rt60_max_s);
    const auto rir = make_rir(rt60, w.sample_rate, rng);
    return apply_reverb(w, rir);
  }
  return w;
}

Waveform speed_perturb(const Waveform& w, double factor) {
  if (factor != 0.9 && factor != 1.0 && factor != 1.1) {
    throw ConfigError("speed_perturb: factor must be 0.9, 1.0 or 1.1");
  }
  if (factor == 1.0) return w;
  const std::size_t n = w.samples.size();
  const std::size_t out_n =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) / factor));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(out_n);
  for (std::size_t i = 0; i < out_n; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const std::size_t i0 = std::min(static_cast<std::size_t>(pos), n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = w.samples[i0] * (1.0 - frac) + w.samples[i1] * frac;
  }
  return out;
}

}  // namespace svf
