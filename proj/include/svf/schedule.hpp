// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Learning-rate schedules over fractional epochs.
//   warmup+step: linear ramp 0 -> lr_start over warmup_epochs, then x
//                decay_factor every decay_every epochs, floored at lr_end.
//   step:        warmup+step with no warmup.
//   cosine:      lr_start -> lr_end over cosine_epochs, held at lr_end after.

#pragma once

#include <string>

#include "svf/common.hpp"

namespace svf {

enum class ScheduleKind { Step, Cosine, WarmupStep };

ScheduleKind schedule_kind_from_name(const std::string& name);
const char* schedule_kind_name(ScheduleKind k);

struct Schedule {
  ScheduleKind kind = ScheduleKind::WarmupStep;
  double lr_start = 1e-4;
  double lr_end = 1e-5;  // floor for step kinds, final value for cosine
  double warmup_epochs = 5.0;
  double decay_every = 5.0;
  double decay_factor = 0.1;
  double cosine_epochs = 2.0;

  double lr_at(double epoch_frac) const;
};

}  // namespace svf
