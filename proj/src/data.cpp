// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/data.hpp"

#include <fstream>
#include <sstream>

namespace svf {

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_manifest: cannot open \"" + path + "\"");
  Manifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!std::getline(ss, e.utt_id, '\t') || !std::getline(ss, e.speaker_id, '\t') ||
        !std::getline(ss, e.path, '\t')) {
      throw IoError("load_manifest: malformed line \"" + line + "\"");
    }
    m.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("save_manifest: cannot open \"" + path + "\"");
  for (const auto& e : m) {
    os << e.utt_id << '\t' << e.speaker_id << '\t' << e.path << '\n';
  }
  if (!os) throw IoError("save_manifest: write failed for \"" + path + "\"");
}

}  // namespace svf
