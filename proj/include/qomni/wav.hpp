// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Minimal 16-bit PCM mono WAV reader/writer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "qomni/core.hpp"

namespace qomni::wav {

struct PcmAudio {
  int sample_rate_hz = 0;
  std::vector<double> samples;  // [-1, 1]
};

namespace detail {

inline void put_u32(std::vector<char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::vector<char>& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>((v >> 8) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t get_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

}  // namespace detail

inline std::int16_t to_pcm16(double x) {
  double c = std::clamp(x, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

inline std::vector<char> encode(const PcmAudio& audio) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::vector<char> b;
  b.reserve(44 + data_bytes);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, static_cast<std::uint32_t>(audio.sample_rate_hz));
  detail::put_u32(b, static_cast<std::uint32_t>(audio.sample_rate_hz) * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(b, data_bytes);
  for (double s : audio.samples) detail::put_u16(b, static_cast<std::uint16_t>(to_pcm16(s)));
  return b;
}

inline void write_file(const std::string& path, const PcmAudio& audio) {
  auto bytes = encode(audio);
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline PcmAudio decode(const std::vector<char>& raw) {
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  require(raw.size() >= 12 && std::memcmp(p, "RIFF", 4) == 0 && std::memcmp(p + 8, "WAVE", 4) == 0,
          "not a RIFF/WAVE file");
  PcmAudio out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    std::uint32_t size = detail::get_u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    require(pos + 8 + size <= raw.size(), "truncated WAV chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      require(size >= 16, "short fmt chunk");
      require(detail::get_u16(body) == 1, "only PCM WAV is supported");
      require(detail::get_u16(body + 2) == 1, "only mono WAV is supported");
      require(detail::get_u16(body + 14) == 16, "only 16-bit WAV is supported");
      out.sample_rate_hz = static_cast<int>(detail::get_u32(body + 4));
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      require(have_fmt, "data chunk before fmt chunk");
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = static_cast<std::int16_t>(detail::get_u16(body + 2 * i)) / 32768.0;
      return out;
    }
    pos += 8 + size + (size & 1);
  }
  throw Error("WAV file has no data chunk");
}

inline PcmAudio read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open '" + path + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(raw);
}

}  // namespace qomni::wav
