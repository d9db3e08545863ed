// Copyright 2026 The SVForge Authors
// Licensed under the Apache License, Version 2.0

#include "svf/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace svf {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  if (w.samples.empty()) throw IoError("write_wav: empty waveform");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("write_wav: cannot open \"" + path + "\"");
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  put_u32(os, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(os, static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(os, 2);   // block align
  put_u16(os, 16);  // bits per sample
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const long v = std::clamp(std::lrint(clipped * 32768.0), -32768L, 32767L);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (!os) throw IoError("write_wav: write failed for \"" + path + "\"");
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_wav: cannot open \"" + path + "\"");
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw IoError("read_wav: not RIFF: " + path);
  get_u32(is);  // riff size
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw IoError("read_wav: not WAVE: " + path);

  Waveform w;
  bool got_fmt = false;
  while (is.read(tag, 4)) {
    const std::uint32_t chunk = get_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t fmt = get_u16(is);
      const std::uint16_t channels = get_u16(is);
      const std::uint32_t rate = get_u32(is);
      get_u32(is);  // byte rate
      get_u16(is);  // block align
      const std::uint16_t bits = get_u16(is);
      if (fmt != 1 || channels != 1 || bits != 16) {
        throw IoError("read_wav: expected 16-bit mono PCM: " + path);
      }
      if (rate != 16000) throw IoError("read_wav: expected 16 kHz: " + path);
      w.sample_rate = static_cast<int>(rate);
      if (chunk > 16) is.ignore(chunk - 16);
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw IoError("read_wav: data before fmt: " + path);
      const std::uint32_t n = chunk / 2;
      w.samples.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::int16_t v = static_cast<std::int16_t>(get_u16(is));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      if (!is) throw IoError("read_wav: truncated data: " + path);
      return w;
    } else {
      is.ignore(chunk + (chunk % 2));
    }
  }
  throw IoError("read_wav: no data chunk: " + path);
}

}  // namespace svf
