#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace edgekv {

// A point on the 2^m identifier ring.
struct Identifier {
  uint64_t value = 0;

  friend bool operator==(Identifier a, Identifier b) { return a.value == b.value; }
  friend bool operator!=(Identifier a, Identifier b) { return a.value != b.value; }
  friend bool operator<(Identifier a, Identifier b) { return a.value < b.value; }
};

// Interval on the ring with configurable endpoint closure. Membership is
// well-defined under wraparound; from == to with both ends open covers the
// whole ring minus the endpoint.
struct RingInterval {
  Identifier from;
  Identifier to;
  bool closed_left = false;
  bool closed_right = false;

  static RingInterval open(Identifier from, Identifier to) {
    return {from, to, false, false};
  }
  static RingInterval open_closed(Identifier from, Identifier to) {
    return {from, to, false, true};
  }
  static RingInterval closed_open(Identifier from, Identifier to) {
    return {from, to, true, false};
  }
};

// Consistent-hashing identifier space: all arithmetic is mod 2^m.
// m is a configuration constant (64 in deployments, smaller in tests).
class RingSpace {
 public:
  explicit RingSpace(unsigned bits = 64);

  unsigned bits() const { return bits_; }

  // First m bits (big-endian) of SHA-256(name). Rejects empty names.
  Identifier hash_id(std::string_view name) const;

  Identifier add(Identifier a, uint64_t delta) const;

  // Clockwise distance from a to b.
  uint64_t distance(Identifier a, Identifier b) const;

  bool in_interval(Identifier x, const RingInterval& ivl) const;

  // Start of finger i (1-based): (n + 2^(i-1)) mod 2^m.
  Identifier finger_start(Identifier n, unsigned i) const;

  // Fixed-width lowercase hex, ceil(m/4) digits.
  std::string to_hex(Identifier id) const;
  std::optional<Identifier> parse_hex(std::string_view hex) const;

 private:
  unsigned bits_;
  uint64_t mask_;  // 2^m - 1
};

}  // namespace edgekv
