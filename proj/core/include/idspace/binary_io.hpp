#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "idspace/errors.hpp"

namespace idspace::binary {

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <typename T>
void write(std::ostream& os, T value) {
  value = to_little_endian(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write(os, v); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write(os, v); }
inline void write_i32(std::ostream& os, std::int32_t v) { write(os, v); }
inline void write_f32(std::ostream& os, float v) { write(os, v); }

template <typename T>
T read(std::istream& is, const char* what) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  return to_little_endian(value);
}

inline std::uint8_t read_u8(std::istream& is, const char* what) { return read<std::uint8_t>(is, what); }
inline std::uint32_t read_u32(std::istream& is, const char* what) { return read<std::uint32_t>(is, what); }
inline std::int32_t read_i32(std::istream& is, const char* what) { return read<std::int32_t>(is, what); }
inline float read_f32(std::istream& is, const char* what) { return read<float>(is, what); }

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char got[4] = {};
  is.read(got, 4);
  if (is.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected \"") + magic + "\"");
  }
}

}  // namespace idspace::binary
