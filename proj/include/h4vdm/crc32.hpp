#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace h4vdm {

// CRC-32 (IEEE 802.3 polynomial, reflected), as used by zlib/PNG.
uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

std::string crc32_hex(const uint8_t* data, size_t len);

}  // namespace h4vdm
