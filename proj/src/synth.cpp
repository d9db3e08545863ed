// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/synth.hpp"

#include <cmath>
#include <cstdio>

namespace svf {

SynthSpeaker make_speaker(int index, const Rng& dataset_rng) {
  Rng rng = dataset_rng.split("speaker", static_cast<std::uint64_t>(index));
  SynthSpeaker s;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "spk%03d", index);
  s.speaker_id = buf;
  s.seed = rng.next_u64();
  s.f0_hz = std::exp(rng.uniform(std::log(90.0), std::log(260.0)));
  s.formant_hz = {rng.uniform(280.0, 850.0), rng.uniform(950.0, 2200.0),
                  rng.uniform(2400.0, 3400.0)};
  s.formant_bw = {rng.uniform(50.0, 110.0), rng.uniform(60.0, 130.0), rng.uniform(90.0, 180.0)};
  s.tilt = rng.uniform(0.2, 0.7);
  s.vibrato_rate_hz = rng.uniform(4.0, 7.0);
  s.vibrato_depth = rng.uniform(0.01, 0.04);
  s.env_rate_hz = rng.uniform(2.5, 5.5);
  s.breath = rng.uniform(0.02, 0.10);
  return s;
}

namespace {

// Two-pole resonator, direct form II transposed.
struct Resonator {
  double a1, a2;
  double z1 = 0.0, z2 = 0.0;
  Resonator(double f_hz, double bw_hz, int sr) {
    const double r = std::exp(-M_PI * bw_hz / sr);
    a1 = 2.0 * r * std::cos(2.0 * M_PI * f_hz / sr);
    a2 = -r * r;
  }
  double step(double x) {
    const double y = x + a1 * z1 + a2 * z2;
    z2 = z1;
    z1 = y;
    return y;
  }
};

}  // namespace

Waveform synth_utterance(const SynthSpeaker& spk, Rng utt_rng, double dur_s, int sample_rate) {
  const Index n = static_cast<Index>(dur_s * sample_rate);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(static_cast<std::size_t>(n), 0.0);

  // Per-utterance variation on top of the fixed signature.
  const double f0 = spk.f0_hz * (1.0 + utt_rng.uniform(-0.02, 0.02));
  const double vib_phase = utt_rng.uniform(0.0, 2.0 * M_PI);
  const double env_phase = utt_rng.uniform(0.0, 2.0 * M_PI);
  const double env_rate = spk.env_rate_hz * (1.0 + utt_rng.uniform(-0.15, 0.15));
  const double breath = spk.breath * (1.0 + utt_rng.uniform(-0.3, 0.3));

  std::array<Resonator, 3> cascade{Resonator(spk.formant_hz[0], spk.formant_bw[0], sample_rate),
                                   Resonator(spk.formant_hz[1], spk.formant_bw[1], sample_rate),
                                   Resonator(spk.formant_hz[2], spk.formant_bw[2], sample_rate)};

  double phase = utt_rng.uniform(0.0, 1.0);
  double jitter = 0.0;
  double lp = 0.0;
  double peak = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double vib = 1.0 + spk.vibrato_depth * std::sin(2.0 * M_PI * spk.vibrato_rate_hz * t + vib_phase);
    phase += f0 * vib * (1.0 + jitter) / sample_rate;
    double exc = breath * utt_rng.normal();
    if (phase >= 1.0) {
      phase -= 1.0;
      exc += 1.0;
      jitter = utt_rng.uniform(-0.03, 0.03);
    }
    double y = exc;
    for (auto& res : cascade) y = res.step(y) * 0.05;
    lp = spk.tilt * lp + (1.0 - spk.tilt) * y;
    const double env = 0.55 + 0.45 * std::pow(std::sin(2.0 * M_PI * env_rate * t + env_phase), 2.0);
    const double s = lp * env;
    w.samples[static_cast<std::size_t>(i)] = s;
    peak = std::max(peak, std::abs(s));
  }
  if (peak > 0.0) {
    const double g = 0.9 / peak;
    for (auto& s : w.samples) s *= g;
  }
  return w;
}

}  // namespace svf
