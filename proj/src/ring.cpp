#include "edgekv/ring.hpp"

#include "edgekv/sha256.hpp"

namespace edgekv {

RingSpace::RingSpace(unsigned bits) : bits_(bits) {
  if (bits == 0 || bits > 64) {
    throw std::invalid_argument("ring bit-width must be in [1, 64]");
  }
  mask_ = bits == 64 ? ~uint64_t(0) : (uint64_t(1) << bits) - 1;
}

Identifier RingSpace::hash_id(std::string_view name) const {
  if (name.empty()) {
    throw std::invalid_argument("hash_id: empty name");
  }
  auto digest = Sha256::digest(name);
  uint64_t v = 0;
  for (int i = 0; i < 8; i++) v = (v << 8) | digest[i];
  // Keep the *first* m bits of the digest.
  if (bits_ < 64) v >>= (64 - bits_);
  return Identifier{v};
}

Identifier RingSpace::add(Identifier a, uint64_t delta) const {
  return Identifier{(a.value + delta) & mask_};
}

uint64_t RingSpace::distance(Identifier a, Identifier b) const {
  return (b.value - a.value) & mask_;
}

bool RingSpace::in_interval(Identifier x, const RingInterval& ivl) const {
  if (ivl.from == ivl.to) {
    // Degenerate interval: open form covers the whole ring except the
    // endpoint; closing either end admits the endpoint too.
    if (x == ivl.from) return ivl.closed_left || ivl.closed_right;
    return true;
  }
  uint64_t span = distance(ivl.from, ivl.to);
  uint64_t off = distance(ivl.from, x);
  if (off == 0) return ivl.closed_left;
  if (off == span) return ivl.closed_right;
  return off < span;
}

Identifier RingSpace::finger_start(Identifier n, unsigned i) const {
  if (i < 1 || i > bits_) {
    throw std::invalid_argument("finger_start: index out of [1, m]");
  }
  return add(n, uint64_t(1) << (i - 1));
}

std::string RingSpace::to_hex(Identifier id) const {
  unsigned digits = (bits_ + 3) / 4;
  static const char* hex = "0123456789abcdef";
  std::string out(digits, '0');
  uint64_t v = id.value;
  for (unsigned i = 0; i < digits; i++) {
    out[digits - 1 - i] = hex[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::optional<Identifier> RingSpace::parse_hex(std::string_view hex) const {
  unsigned digits = (bits_ + 3) / 4;
  if (hex.size() != digits) return std::nullopt;
  uint64_t v = 0;
  for (char c : hex) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= uint64_t(c - '0');
    else if (c >= 'a' && c <= 'f') v |= uint64_t(c - 'a' + 10);
    else return std::nullopt;
  }
  if (v & ~mask_) return std::nullopt;
  return Identifier{v};
}

}  // namespace edgekv
