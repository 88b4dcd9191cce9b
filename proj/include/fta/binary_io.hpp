#pragma once

// Little-endian primitives for the model and index file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "fta/error.hpp"

namespace fta::binary {

template <typename UInt>
void write_le(std::ostream& out, UInt value) {
  char bytes[sizeof(UInt)];
  for (std::size_t k = 0; k < sizeof(UInt); ++k) bytes[k] = static_cast<char>((value >> (8 * k)) & 0xffu);
  out.write(bytes, sizeof(UInt));
}

inline void write_f64(std::ostream& out, double value) { write_le(out, std::bit_cast<std::uint64_t>(value)); }
inline void write_f32(std::ostream& out, float value) { write_le(out, std::bit_cast<std::uint32_t>(value)); }

inline void write_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

/// Reads exactly n bytes or throws FormatError naming the field.
inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* field) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::FormatError, std::string("truncated file while reading ") + field);
  }
}

template <typename UInt>
UInt read_le(std::istream& in, const char* field) {
  unsigned char bytes[sizeof(UInt)];
  read_exact(in, reinterpret_cast<char*>(bytes), sizeof(UInt), field);
  UInt value = 0;
  for (std::size_t k = 0; k < sizeof(UInt); ++k) value |= static_cast<UInt>(bytes[k]) << (8 * k);
  return value;
}

inline double read_f64(std::istream& in, const char* field) { return std::bit_cast<double>(read_le<std::uint64_t>(in, field)); }
inline float read_f32(std::istream& in, const char* field) { return std::bit_cast<float>(read_le<std::uint32_t>(in, field)); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  read_exact(in, got.data(), got.size(), "magic");
  if (got != magic) throw Error(ErrorCode::FormatError, "bad magic, expected " + std::string(magic));
}

/// Fails unless the stream is exhausted.
inline void expect_eof(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::FormatError, "trailing bytes after payload");
}

}  // namespace fta::binary
