// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "svf/common.hpp"

namespace svf {

// One manifest line: "utt_id<TAB>speaker_id<TAB>path".
struct ManifestEntry {
  std::string utt_id;
  std::string speaker_id;
  std::string path;
};

using Manifest = std::vector<ManifestEntry>;

Manifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Manifest& m);

}  // namespace svf
