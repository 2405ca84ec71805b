#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace rowcol::binio {

// Little-endian primitives for the binary artifact formats.  Encoding is
// explicit byte shuffling (not memcpy of host integers) so the files are
// identical on any platform.

inline void append_u32(std::string& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.append(b, 4);
}

inline void append_u64(std::string& out, std::uint64_t v) {
  append_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
  append_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void append_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  append_u32(out, u);
}

inline std::uint32_t read_u32(const std::string& buf, std::size_t off) {
  const auto b = [&](std::size_t k) {
    return static_cast<std::uint32_t>(
        static_cast<unsigned char>(buf[off + k]));
  };
  return b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
}

inline std::uint64_t read_u64(const std::string& buf, std::size_t off) {
  return static_cast<std::uint64_t>(read_u32(buf, off)) |
         (static_cast<std::uint64_t>(read_u32(buf, off + 4)) << 32);
}

inline double read_f32(const std::string& buf, std::size_t off) {
  const std::uint32_t u = read_u32(buf, off);
  float f;
  std::memcpy(&f, &u, 4);
  return static_cast<double>(f);
}

}  // namespace rowcol::binio
