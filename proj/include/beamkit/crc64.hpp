#pragma once

#include <cstddef>
#include <cstdint>

namespace beamkit {

// CRC-64/XZ (ECMA-182 polynomial, reflected, init/xorout all-ones).
std::uint64_t crc64(const void* data, std::size_t size,
                    std::uint64_t seed = 0);

}  // namespace beamkit
