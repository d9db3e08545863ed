// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0
//
// Shared checkpoint container. Binary layout (all little-endian):
//   magic "SVFORGE1"
//   u32 tensor_count
//   per tensor:
//     u16 name_len, name bytes (UTF-8)
//     u8  rank
//     u32 dims[rank]
//     u8  dtype (0 = f32, 1 = f64)
//     raw values
// Entries are written sorted by name so identical contents produce
// identical bytes. In-memory values are always f64; saving with f32
// narrows each value with a plain cast, loading widens back.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "svf/tensor.hpp"

namespace svf {

struct TensorEntry {
  std::vector<Index> shape;
  Array data;
};

class Checkpoint {
 public:
  void put(const std::string& name, const Tensor& t);
  void put_array(const std::string& name, std::vector<Index> shape, Array data);
  void put_scalar(const std::string& name, double v);
  void put_vector(const std::string& name, const std::vector<double>& v);

  bool has(const std::string& name) const;
  const TensorEntry& get(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  Tensor get_tensor(const std::string& name, bool requires_grad = false) const;

  // Names with the given prefix, sorted.
  std::vector<std::string> names(const std::string& prefix = "") const;
  std::size_t size() const { return entries_.size(); }
  void remove_prefix(const std::string& prefix);

  void save(const std::string& path, bool as_f32 = false) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, TensorEntry> entries_;
};

}  // namespace svf
