// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace svf {

// Signed size type shared across the project (same as Eigen::Index).
using Index = std::ptrdiff_t;

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError -> 1, everything else derived from SvError -> 2,
//   InvariantViolation -> 3.
struct SvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration file, flag, or option value.
struct ConfigError : SvError {
  using SvError::SvError;
};

// Tensor dimension mismatch (names both shapes in the message).
struct ShapeError : SvError {
  using SvError::SvError;
};

// API misuse: non-scalar backward, duplicate LoRA attachment, etc.
struct ContractError : SvError {
  using SvError::SvError;
};

// Layout mismatch between composite structures (gate sets, ragged stacks).
struct StructuralError : SvError {
  using SvError::SvError;
};

// Numeric guard tripped: NaN gradients, zero norms, degenerate inputs.
struct NumericError : SvError {
  using SvError::SvError;
};

// File format / filesystem problems.
struct IoError : SvError {
  using SvError::SvError;
};

// A checked internal invariant failed.
struct InvariantViolation : SvError {
  using SvError::SvError;
};

}  // namespace svf
