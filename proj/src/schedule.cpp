// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/schedule.hpp"

#include <cmath>

namespace svf {

ScheduleKind schedule_kind_from_name(const std::string& name) {
  if (name == "step") return ScheduleKind::Step;
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "warmup+step") return ScheduleKind::WarmupStep;
  throw ConfigError("unknown schedule kind \"" + name + "\"");
}

const char* schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Step: return "step";
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::WarmupStep: return "warmup+step";
  }
  return "?";
}

double Schedule::lr_at(double epoch_frac) const {
  if (epoch_frac < 0.0) throw ContractError("lr_at: negative epoch");
  switch (kind) {
    case ScheduleKind::Cosine: {
      const double x = (cosine_epochs <= 0.0) ? 1.0 : std::min(epoch_frac / cosine_epochs, 1.0);
      return lr_end + (lr_start - lr_end) * 0.5 * (1.0 + std::cos(M_PI * x));
    }
    case ScheduleKind::WarmupStep: {
      if (warmup_epochs > 0.0 && epoch_frac < warmup_epochs) {
        return lr_start * (epoch_frac / warmup_epochs);
      }
      const double past = epoch_frac - warmup_epochs;
      const double decays = (decay_every > 0.0) ? std::floor(past / decay_every) : 0.0;
      return std::max(lr_start * std::pow(decay_factor, decays), lr_end);
    }
    case ScheduleKind::Step: {
      const double decays = (decay_every > 0.0) ? std::floor(epoch_frac / decay_every) : 0.0;
      return std::max(lr_start * std::pow(decay_factor, decays), lr_end);
    }
  }
  throw ContractError("lr_at: bad schedule kind");
}

}  // namespace svf
