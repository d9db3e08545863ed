// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace svf {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'F', 'O', 'R', 'G', 'E', '1'};

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) {
  put_array(name, t.shape(), t.value());
}

void Checkpoint::put_array(const std::string& name, std::vector<Index> shape, Array data) {
  if (name.empty() || name.size() > 0xffff) throw IoError("checkpoint: bad tensor name");
  if (shape_product(shape) != data.size()) {
    throw ShapeError("checkpoint: data length does not match shape for " + name);
  }
  entries_[name] = TensorEntry{std::move(shape), std::move(data)};
}

void Checkpoint::put_scalar(const std::string& name, double v) {
  Array a(1);
  a[0] = v;
  put_array(name, {1}, std::move(a));
}

void Checkpoint::put_vector(const std::string& name, const std::vector<double>& v) {
  Array a(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) a[static_cast<Index>(i)] = v[i];
  put_array(name, {static_cast<Index>(v.size())}, std::move(a));
}

bool Checkpoint::has(const std::string& name) const {
  return entries_.find(name) != entries_.end();
}

const TensorEntry& Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IoError("checkpoint: missing tensor \"" + name + "\"");
  return it->second;
}

double Checkpoint::get_scalar(const std::string& name) const {
  const TensorEntry& e = get(name);
  if (e.data.size() != 1) throw IoError("checkpoint: \"" + name + "\" is not a scalar");
  return e.data[0];
}

Tensor Checkpoint::get_tensor(const std::string& name, bool requires_grad) const {
  const TensorEntry& e = get(name);
  return Tensor::from_flat(e.shape, e.data, requires_grad);
}

std::vector<std::string> Checkpoint::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k.rfind(prefix, 0) == 0) out.push_back(k);
  }
  return out;
}

void Checkpoint::remove_prefix(const std::string& prefix) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->first.rfind(prefix, 0) == 0) it = entries_.erase(it);
    else ++it;
  }
}

void Checkpoint::save(const std::string& path, bool as_f32) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open \"" + path + "\" for writing");
  os.write(kMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    write_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(e.shape.size()));
    for (Index d : e.shape) write_u32(os, static_cast<std::uint32_t>(d));
    os.put(as_f32 ? 0 : 1);
    if (as_f32) {
      for (Index i = 0; i < e.data.size(); ++i) {
        const float f = static_cast<float>(e.data[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(os, bits);
      }
    } else {
      for (Index i = 0; i < e.data.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &e.data[i], 8);
        write_u64(os, bits);
      }
    }
  }
  if (!os) throw IoError("checkpoint: write failed for \"" + path + "\"");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open \"" + path + "\"");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("checkpoint: bad magic in \"" + path + "\"");
  }
  Checkpoint ckpt;
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = read_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int rank = is.get();
    std::vector<Index> shape;
    Index total = 1;
    for (int i = 0; i < rank; ++i) {
      const Index d = static_cast<Index>(read_u32(is));
      shape.push_back(d);
      total *= d;
    }
    const int dtype = is.get();
    Array data(total);
    if (dtype == 0) {
      for (Index i = 0; i < total; ++i) {
        const std::uint32_t bits = read_u32(is);
        float f;
        std::memcpy(&f, &bits, 4);
        data[i] = static_cast<double>(f);
      }
    } else if (dtype == 1) {
      for (Index i = 0; i < total; ++i) {
        const std::uint64_t bits = read_u64(is);
        double d;
        std::memcpy(&d, &bits, 8);
        data[i] = d;
      }
    } else {
      throw IoError("checkpoint: unknown dtype in \"" + path + "\"");
    }
    if (!is) throw IoError("checkpoint: truncated file \"" + path + "\"");
    ckpt.put_array(name, std::move(shape), std::move(data));
  }
  return ckpt;
}

}  // namespace svf
