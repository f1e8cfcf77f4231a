#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "maldistill/core/tensor.hpp"

// Little-endian primitives shared by the tensor and feature file formats.
namespace maldistill::core::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_u8(std::ostream& out, std::uint8_t v) {
  out.write(reinterpret_cast<const char*>(&v), 1);
}
inline void put_f32(std::ostream& out, float v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

/// Reader that tracks the absolute offset so errors can name it.
class Reader {
 public:
  Reader(std::istream& in, std::uint64_t base) : in_(in), offset_(base) {}

  std::uint64_t offset() const { return offset_; }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("truncated ") + what,
                        offset_ + static_cast<std::uint64_t>(in_.gcount()));
    }
    offset_ += n;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
  }
  std::uint8_t u8(const char* what) {
    std::uint8_t v;
    bytes(reinterpret_cast<char*>(&v), 1, what);
    return v;
  }
  void magic(const char (&expected)[5]) {
    char got[4];
    const auto at = offset_;
    bytes(got, 4, "magic");
    if (std::memcmp(got, expected, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + expected, at);
    }
  }
  std::uint64_t varint(const char* what) {
    std::uint64_t v = 0;
    int shift = 0;
    for (;;) {
      const auto at = offset_;
      const std::uint8_t b = u8(what);
      if (shift >= 64) throw FormatError(std::string("overlong varint in ") + what, at);
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if ((b & 0x80) == 0) return v;
      shift += 7;
    }
  }

 private:
  std::istream& in_;
  std::uint64_t offset_;
};

inline void put_varint(std::ostream& out, std::uint64_t v) {
  while (v >= 0x80) {
    put_u8(out, static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  put_u8(out, static_cast<std::uint8_t>(v));
}

}  // namespace maldistill::core::binio
