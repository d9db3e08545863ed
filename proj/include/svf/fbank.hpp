// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Log-mel filterbank features and feature normalization.
//
// Conventions: HTK mel scale 2595*log10(1 + f/700), 80 triangular filters
// over 0-8000 Hz, pre-emphasis 0.97, Hamming window, 25 ms frames with a
// 10 ms hop, log floor 1e-10. Frames are rows of the feature matrix.

#pragma once

#include <vector>

#include "svf/tensor.hpp"
#include "svf/wav.hpp"

namespace svf {

struct FbankConfig {
  int sample_rate = 16000;
  int num_mels = 80;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;

  Index window_samples() const {
    return static_cast<Index>(frame_ms * sample_rate / 1000.0);
  }
  Index hop_samples() const {
    return static_cast<Index>(hop_ms * sample_rate / 1000.0);
  }
};

struct FbankFeatures {
  MatrixRM frames;  // T x num_mels
  double frame_ms = 25.0;
  double hop_ms = 10.0;

  Index num_frames() const { return frames.rows(); }
  Index dim() const { return frames.cols(); }
};

// floor((num_samples - window) / hop) + 1; requires at least one window.
Index fbank_num_frames(Index num_samples, const FbankConfig& cfg);

FbankFeatures fbank(const Waveform& w, const FbankConfig& cfg = FbankConfig());

// Per-dimension normalization statistics. scale = sqrt(var + eps) so the
// transform is exactly invertible and constant dimensions map to zero.
struct FeatureStats {
  Array mean;
  Array scale;
  static constexpr double kVarEps = 1e-10;
};

FeatureStats feature_stats(const FbankFeatures& f);
FeatureStats feature_stats(const std::vector<FbankFeatures>& fs);
FbankFeatures normalize(const FbankFeatures& f, const FeatureStats& s);
FbankFeatures denormalize(const FbankFeatures& f, const FeatureStats& s);

// HTK mel scale helpers (exposed for the DFT oracle in tests).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace svf
