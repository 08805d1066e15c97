#include "beamkit/crc64.hpp"

#include <array>

namespace beamkit {

namespace {

constexpr std::uint64_t kPolyReflected = 0xC96C5795D7870F42ull;

std::array<std::uint64_t, 256> make_table() {
  std::array<std::uint64_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint64_t crc = i;
    for (int bit = 0; bit < 8; ++bit)
      crc = (crc >> 1) ^ ((crc & 1) ? kPolyReflected : 0);
    t[i] = crc;
  }
  return t;
}

const std::array<std::uint64_t, 256>& table() {
  static const auto t = make_table();
  return t;
}

}  // namespace

std::uint64_t crc64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t crc = ~seed;
  for (std::size_t i = 0; i < size; ++i)
    crc = table()[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

}  // namespace beamkit
