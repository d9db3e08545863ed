// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Synthetic speaker corpus, the desk-scale stand-in for a real dataset.
//
// A speaker is a fixed random source-filter signature: base pitch, three
// formant resonators, spectral tilt, vibrato and syllable-rate envelope
// settings. Utterances excite that signature with per-utterance random
// phases, pitch wobble and breath noise, so speakers are acoustically
// separable by construction while utterances still vary.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "svf/rng.hpp"
#include "svf/wav.hpp"

namespace svf {

struct SynthSpeaker {
  std::string speaker_id;
  std::uint64_t seed = 0;
  double f0_hz = 120.0;
  std::array<double, 3> formant_hz{500.0, 1500.0, 2900.0};
  std::array<double, 3> formant_bw{80.0, 90.0, 120.0};
  double tilt = 0.5;            // one-pole lowpass mix in [0,1)
  double vibrato_rate_hz = 5.0;
  double vibrato_depth = 0.02;  // relative pitch excursion
  double env_rate_hz = 4.0;     // syllable-like amplitude modulation
  double breath = 0.05;         // noise mixed into the excitation
};

// Deterministic speaker signature for a given index under the dataset rng.
SynthSpeaker make_speaker(int index, const Rng& dataset_rng);

// One utterance of dur_s seconds through the speaker's signature, peak 0.9.
Waveform synth_utterance(const SynthSpeaker& spk, Rng utt_rng, double dur_s,
                         int sample_rate = 16000);

}  // namespace svf
