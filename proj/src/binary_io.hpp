#pragma once

// Little-endian primitives shared by the feature-file and checkpoint codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace hiccap::detail {

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline bool get_u8(std::istream& in, std::uint8_t& v) {
  char c;
  if (!in.get(c)) return false;
  v = static_cast<std::uint8_t>(c);
  return true;
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_f32(std::istream& in, float& f) {
  std::uint32_t u;
  if (!get_u32(in, u)) return false;
  f = std::bit_cast<float>(u);
  return true;
}

inline bool get_bytes(std::istream& in, std::string& s, std::size_t n) {
  s.resize(n);
  return n == 0 || static_cast<bool>(in.read(s.data(), static_cast<std::streamsize>(n)));
}

}  // namespace hiccap::detail
