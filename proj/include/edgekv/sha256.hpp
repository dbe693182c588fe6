#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>

namespace edgekv {

// FIPS 180-4 SHA-256.
class Sha256 {
 public:
  Sha256();

  void update(const void* data, size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }

  // Finalizes and returns the 32-byte digest. The object must not be
  // reused afterwards.
  std::array<uint8_t, 32> finish();

  static std::array<uint8_t, 32> digest(std::string_view s);

 private:
  void process_block(const uint8_t* block);

  std::array<uint32_t, 8> state_;
  std::array<uint8_t, 64> buffer_;
  uint64_t total_len_ = 0;
  size_t buffer_len_ = 0;
};

std::string to_hex(const uint8_t* data, size_t len);

}  // namespace edgekv
