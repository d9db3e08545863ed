// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// On-the-fly waveform augmentation: additive noise at a sampled SNR,
// convolutional reverb through a synthetic room impulse response, and
// speed perturbation by linear-interpolation resampling. All outputs are
// peak-renormalized into [-1, 1]; everything is deterministic given the
// rng stream.

#pragma once

#include <vector>

#include "svf/rng.hpp"
#include "svf/wav.hpp"

namespace svf {

struct AugmentPolicy {
  double noise_prob = 0.4;
  double reverb_prob = 0.3;
  double snr_min_db = 0.0;
  double snr_max_db = 15.0;
  double rt60_min_s = 0.1;
  double rt60_max_s = 0.5;
  double babble_prob = 0.5;  // babble-like vs white noise
  bool enabled = true;
};

// Applies one of {noise, reverb, none} according to the policy draws.
Waveform augment(const Waveform& w, const AugmentPolicy& policy, Rng& rng);

// Exact-SNR additive noise: the noise is scaled so that
// 10*log10(P_signal / P_noise) equals snr_db.
Waveform add_noise_at_snr(const Waveform& w, const std::vector<double>& noise, double snr_db);

// White or babble-like (low-passed, amplitude-modulated) synthetic noise.
std::vector<double> make_noise(Index n, bool babble, Rng& rng);

// Exponentially decaying white-noise impulse response with the given RT60,
// normalized to unit energy.
std::vector<double> make_rir(double rt60_s, int sample_rate, Rng& rng);

// Convolves and truncates the tail so the length is preserved.
Waveform apply_reverb(const Waveform& w, const std::vector<double>& rir);

// factor must be one of {0.9, 1.0, 1.1}; output length is round(n/factor).
Waveform speed_perturb(const Waveform& w, double factor);

// Scales down (never up) so all samples fit in [-1, 1].
Waveform peak_normalize(Waveform w);

}  // namespace svf
