#pragma once
// Little-endian primitives shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "milg/error.hpp"

namespace milg::binio {

template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  }
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), 8);
}

inline void write_f32(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  } else {
    for (float f : values) write_u32(os, std::bit_cast<std::uint32_t>(f));
  }
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw UserError("unexpected end of file");
  return byteswap_if_big(v);
}

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw UserError("unexpected end of file");
  return byteswap_if_big(v);
}

inline void read_f32(std::istream& is, std::span<float> out) {
  if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * 4)))
    throw UserError("unexpected end of file");
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& f : out) f = std::bit_cast<float>(byteswap_if_big(std::bit_cast<std::uint32_t>(f)));
  }
}

}  // namespace milg::binio
