#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "svs/core/error.hpp"

namespace svs::io {

namespace detail {

inline uint32_t crc32(const unsigned char* data, size_t len, uint32_t crc = 0) {
  static const auto table = [] {
    std::vector<uint32_t> t(256);
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline uint32_t adler32(const unsigned char* data, size_t len) {
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

inline void put_be32(std::string& s, uint32_t v) {
  for (int i = 3; i >= 0; --i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_chunk(std::string& out, const char type[5], const std::string& body) {
  put_be32(out, static_cast<uint32_t>(body.size()));
  std::string block = std::string(type, 4) + body;
  out += block;
  put_be32(out, crc32(reinterpret_cast<const unsigned char*>(block.data()), block.size()));
}

// zlib stream made of stored (uncompressed) deflate blocks.
inline std::string zlib_stored(const std::vector<unsigned char>& raw) {
  std::string z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t pos = 0;
  const size_t block = 65535;
  while (pos < raw.size() || raw.empty()) {
    const size_t len = std::min(block, raw.size() - pos);
    const bool last = pos + len >= raw.size();
    z.push_back(last ? 1 : 0);
    z.push_back(static_cast<char>(len & 0xff));
    z.push_back(static_cast<char>((len >> 8) & 0xff));
    z.push_back(static_cast<char>(~len & 0xff));
    z.push_back(static_cast<char>((~len >> 8) & 0xff));
    z.append(reinterpret_cast<const char*>(raw.data() + pos), len);
    pos += len;
    if (last) break;
  }
  put_be32(z, adler32(raw.data(), raw.size()));
  return z;
}

}  // namespace detail

// 8-bit grayscale PNG. pixels is row-major, size width*height, 0=black.
inline void write_png_gray(const std::string& path, int width, int height,
                           const std::vector<unsigned char>& pixels) {
  if (width <= 0 || height <= 0) throw InvalidInput("write_png_gray: bad dimensions");
  if (pixels.size() != static_cast<size_t>(width) * height)
    throw InvalidInput("write_png_gray: pixel buffer size mismatch");

  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(height) * (width + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + static_cast<size_t>(y) * width,
               pixels.begin() + static_cast<size_t>(y + 1) * width);
  }

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_be32(ihdr, static_cast<uint32_t>(width));
  detail::put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", detail::zlib_stored(raw));
  detail::put_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_png_gray: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write_png_gray: write failed for " + path);
}

}  // namespace svs::io
