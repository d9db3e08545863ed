// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "svf/common.hpp"

namespace svf {

// Mono audio in [-1, 1] at a fixed 16 kHz rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

// 16-bit little-endian mono PCM WAV, 16 kHz. Anything else is an IoError.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace svf
