// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace svf {

// Deterministic xoshiro256** stream with named substreams.
//
// Hand-rolled so that runs are bit-reproducible: libstdc++ distribution
// objects are implementation-defined and would leak into checkpoints.
// Every source of randomness in a run hangs off one root seed via
// split("data"), split("init"), split("augment", utt_index), ...
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (second draw cached).
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::int64_t uniform_int(std::int64_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

  // Independent substream keyed by name (and optional index).
  Rng split(std::string_view name) const;
  Rng split(std::string_view name, std::uint64_t index) const;

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over the name mixed into the seed; used by Rng::split.
std::uint64_t hash_seed(std::uint64_t seed, std::string_view name, std::uint64_t index);

}  // namespace svf
