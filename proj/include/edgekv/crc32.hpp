#pragma once

#include <cstdint>
#include <cstddef>
#include <string_view>

namespace edgekv {

// CRC-32 (IEEE 802.3, reflected, init/final 0xffffffff).
uint32_t crc32(const void* data, size_t len);

inline uint32_t crc32(std::string_view s) { return crc32(s.data(), s.size()); }

}  // namespace edgekv
