// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Line-oriented run configuration: "dotted.key = value" with '#' comments.
// Every key must exist in the built-in registry (unknown keys are
// rejected), and serialize() -> parse() is an identity.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svf/common.hpp"

namespace svf {

class RunConfig {
 public:
  // All keys at their default values.
  static RunConfig defaults();
  // Defaults overlaid with a config file.
  static RunConfig from_file(const std::string& path);
  // Defaults overlaid with config text.
  static RunConfig parse(const std::string& text);

  // "key=value" (as passed to --set).
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  Index get_index(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  // Sorted "key = value" lines.
  std::string serialize() const;

  static const std::vector<std::pair<std::string, std::string>>& registry();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace svf
