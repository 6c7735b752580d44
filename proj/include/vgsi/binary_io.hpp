#pragma once

// Little-endian primitive encoding shared by the embedding and checkpoint
// file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "vgsi/error.hpp"

namespace vgsi::binary {

template <typename U>
void put_uint(std::ostream& os, U value) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  }
  os.write(buf.data(), buf.size());
}

template <typename U>
bool get_uint(std::istream& is, U& value) {
  std::array<unsigned char, sizeof(U)> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) return false;
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  value = static_cast<U>(v);
  return true;
}

inline void put_f32(std::ostream& os, float v) { put_uint(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }

inline bool get_f32(std::istream& is, float& v) {
  std::uint32_t bits = 0;
  if (!get_uint(is, bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}

inline bool get_f64(std::istream& is, double& v) {
  std::uint64_t bits = 0;
  if (!get_uint(is, bits)) return false;
  v = std::bit_cast<double>(bits);
  return true;
}

// u16 length prefix followed by the raw UTF-8 bytes.
inline void put_short_string(std::ostream& os, const std::string& s) {
  if (s.size() > 0xffff) throw FormatError("identifier longer than 65535 bytes: " + s.substr(0, 32));
  put_uint(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool get_short_string(std::istream& is, std::string& s) {
  std::uint16_t len = 0;
  if (!get_uint(is, len)) return false;
  s.resize(len);
  return len == 0 || static_cast<bool>(is.read(s.data(), len));
}

}  // namespace vgsi::binary
