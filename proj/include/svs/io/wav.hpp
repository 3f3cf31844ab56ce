#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "svs/core/error.hpp"
#include "svs/dsp/types.hpp"

namespace svs::io {

namespace detail {

inline void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline uint32_t get_u32(const std::string& s, size_t off) {
  return static_cast<uint32_t>(static_cast<unsigned char>(s[off])) |
         static_cast<uint32_t>(static_cast<unsigned char>(s[off + 1])) << 8 |
         static_cast<uint32_t>(static_cast<unsigned char>(s[off + 2])) << 16 |
         static_cast<uint32_t>(static_cast<unsigned char>(s[off + 3])) << 24;
}

inline uint16_t get_u16(const std::string& s, size_t off) {
  return static_cast<uint16_t>(static_cast<unsigned char>(s[off]) |
                               static_cast<unsigned char>(s[off + 1]) << 8);
}

}  // namespace detail

// Mono 16-bit PCM RIFF writer. Samples are clamped to [-1, 1].
inline void write_wav(const std::string& path, const dsp::AudioClip& clip) {
  if (clip.samples.empty()) throw InvalidInput("write_wav: empty clip");
  if (clip.sample_rate <= 0) throw InvalidInput("write_wav: bad sample rate");
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_bytes = n * 2;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<uint32_t>(clip.sample_rate));
  detail::put_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    const double x = std::clamp(clip.samples[i], Real(-1), Real(1));
    const int v = static_cast<int>(std::lround(x * 32767.0));
    detail::put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write_wav: write failed for " + path);
}

// Reads mono 16-bit PCM; walks chunks so extra metadata is tolerated.
inline dsp::AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 44 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0)
    throw InvalidInput("read_wav: not a RIFF/WAVE file: " + path);

  int sample_rate = 0, channels = 0, bits = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const uint32_t len = detail::get_u32(buf, pos + 4);
    if (pos + 8 + len > buf.size()) throw InvalidInput("read_wav: truncated chunk in " + path);
    if (id == "fmt ") {
      if (len < 16) throw InvalidInput("read_wav: short fmt chunk in " + path);
      const uint16_t format = detail::get_u16(buf, pos + 8);
      channels = detail::get_u16(buf, pos + 10);
      sample_rate = static_cast<int>(detail::get_u32(buf, pos + 12));
      bits = detail::get_u16(buf, pos + 22);
      if (format != 1) throw InvalidInput("read_wav: only PCM supported: " + path);
    } else if (id == "data") {
      data_off = pos + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (sample_rate == 0) throw InvalidInput("read_wav: missing fmt chunk in " + path);
  if (data_off == 0) throw InvalidInput("read_wav: missing data chunk in " + path);
  if (channels != 1) throw InvalidInput("read_wav: only mono supported: " + path);
  if (bits != 16) throw InvalidInput("read_wav: only 16-bit supported: " + path);

  dsp::AudioClip clip;
  clip.sample_rate = sample_rate;
  const size_t n = data_len / 2;
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int16_t v = static_cast<int16_t>(detail::get_u16(buf, data_off + 2 * i));
    clip.samples[i] = static_cast<Real>(v) / 32767.0;  // matches the writer's scale
  }
  return clip;
}

}  // namespace svs::io
