#pragma once

#include <cstdint>
#include <string_view>

namespace edgekv {

// Deterministic 64-bit RNG (splitmix64). Used everywhere randomness is
// needed so that simulation runs are reproducible across platforms and
// standard-library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [lo, hi] inclusive.
  uint64_t uniform(uint64_t lo, uint64_t hi) {
    return lo + next() % (hi - lo + 1);
  }

  // Uniform in [0, 1).
  double uniform01() { return double(next() >> 11) * (1.0 / 9007199254740992.0); }

  // Derives an independent stream, e.g. per node or per client session.
  Rng fork(std::string_view label) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : label) {
      h ^= uint8_t(c);
      h *= 1099511628211ull;
    }
    return Rng(state_ ^ h);
  }

 private:
  uint64_t state_;
};

}  // namespace edgekv
