#include <doctest.h>

#include <map>
#include <set>

#include "edgekv/ring.hpp"
#include "edgekv/rng.hpp"
#include "edgekv/sha256.hpp"

using namespace edgekv;

namespace {

// Literal walk around the discrete ring; the oracle for in_interval.
bool scan_interval(unsigned bits, uint64_t x, uint64_t from, uint64_t to,
                   bool closed_left, bool closed_right) {
  uint64_t size = uint64_t(1) << bits;
  if (closed_left && x == from) return true;
  if (closed_right && x == to) return true;
  uint64_t p = (from + 1) % size;
  while (p != to) {
    if (p == x && p != from) return true;
    p = (p + 1) % size;
  }
  return false;
}

}  // namespace

TEST_CASE("sha256 matches reference vectors") {
  auto hex = [](std::string_view s) {
    auto d = Sha256::digest(s);
    return to_hex(d.data(), d.size());
  };
  CHECK(hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(hex(std::string(1000, 'a')) ==
        "41edece42d63e8d9bf515a9ba6932e1c20cbc9f5a5d134645adb5db1b9737ea3");
}

TEST_CASE("hash_id is deterministic and matches frozen reference values") {
  RingSpace ring(64);
  CHECK(ring.hash_id("gw-1") == ring.hash_id("gw-1"));
  // Frozen from an independent SHA-256 implementation (first 8 digest
  // bytes, big-endian).
  CHECK(ring.hash_id("gw-1").value == 0xf5135b2765fda469ull);
  CHECK(ring.hash_id("alpha").value == 0x8ed3f6ad685b959eull);
  CHECK(ring.hash_id("k1").value == 0x6ab9f1eb8f7d3388ull);
}

TEST_CASE("hash_id rejects empty input") {
  RingSpace ring(64);
  CHECK_THROWS_AS(ring.hash_id(""), std::invalid_argument);
}

TEST_CASE("hash_id truncates to the ring width") {
  RingSpace ring8(8);
  for (const char* name : {"a", "b", "gw-1"}) {
    RingSpace ring64(64);
    CHECK(ring8.hash_id(name).value == ring64.hash_id(name).value >> 56);
    CHECK(ring8.hash_id(name).value < 256);
  }
}

TEST_CASE("hash_id spreads uniformly across ring segments") {
  RingSpace ring(64);
  Rng rng(2024);
  std::map<int, int> buckets;
  const int names = 10000;
  for (int i = 0; i < names; i++) {
    std::string name = "node-" + std::to_string(rng.next());
    uint64_t v = ring.hash_id(name).value;
    buckets[int(v >> 60)]++;
  }
  const double expected = names / 16.0;  // 625
  for (int seg = 0; seg < 16; seg++) {
    CHECK(buckets[seg] >= int(expected * 0.8));
    CHECK(buckets[seg] <= int(expected * 1.2));
  }
}

TEST_CASE("hash_id avalanche: single-byte change always changes the id") {
  RingSpace ring(64);
  Rng rng(7);
  for (int trial = 0; trial < 1000; trial++) {
    std::string name = "key-" + std::to_string(rng.next());
    std::string flipped = name;
    size_t pos = rng.uniform(0, flipped.size() - 1);
    flipped[pos] = char(flipped[pos] ^ uint8_t(1 + rng.uniform(0, 254)));
    if (flipped == name) continue;
    CHECK(ring.hash_id(name).value != ring.hash_id(flipped).value);
  }
}

TEST_CASE("in_interval spec examples, m=8") {
  RingSpace ring(8);
  CHECK(ring.in_interval({5}, RingInterval::open({3}, {7})));
  CHECK(ring.in_interval({1}, RingInterval::open({250}, {4})));
  CHECK(ring.in_interval({3}, RingInterval::closed_open({3}, {7})));
  CHECK_FALSE(ring.in_interval({3}, RingInterval::open({3}, {7})));
}

TEST_CASE("in_interval equals brute-force ring scan exhaustively") {
  for (unsigned bits : {3u, 4u}) {
    RingSpace ring(bits);
    uint64_t size = uint64_t(1) << bits;
    for (uint64_t from = 0; from < size; from++) {
      for (uint64_t to = 0; to < size; to++) {
        for (uint64_t x = 0; x < size; x++) {
          for (int cl = 0; cl < 2; cl++) {
            for (int cr = 0; cr < 2; cr++) {
              RingInterval ivl{{from}, {to}, cl == 1, cr == 1};
              bool got = ring.in_interval({x}, ivl);
              bool want = scan_interval(bits, x, from, to, cl == 1, cr == 1);
              if (got != want) {
                CAPTURE(bits);
                CAPTURE(from);
                CAPTURE(to);
                CAPTURE(x);
                CAPTURE(cl);
                CAPTURE(cr);
                REQUIRE(got == want);
              }
            }
          }
        }
      }
    }
  }
}

TEST_CASE("in_interval sampled against scan at m=8") {
  RingSpace ring(8);
  Rng rng(99);
  for (int i = 0; i < 20000; i++) {
    uint64_t from = rng.uniform(0, 255);
    uint64_t to = rng.uniform(0, 255);
    uint64_t x = rng.uniform(0, 255);
    bool cl = rng.uniform(0, 1) == 1;
    bool cr = rng.uniform(0, 1) == 1;
    RingInterval ivl{{from}, {to}, cl, cr};
    CHECK(ring.in_interval({x}, ivl) == scan_interval(8, x, from, to, cl, cr));
  }
}

TEST_CASE("finger_start spec examples, m=6") {
  RingSpace ring(6);
  CHECK(ring.finger_start({0}, 1).value == 1);
  CHECK(ring.finger_start({1}, 6).value == 33);
  CHECK(ring.finger_start({60}, 4).value == 4);
}

TEST_CASE("finger_start exhaustive for m=8") {
  RingSpace ring(8);
  for (uint64_t n = 0; n < 256; n++) {
    for (unsigned i = 1; i <= 8; i++) {
      CHECK(ring.finger_start({n}, i).value == (n + (uint64_t(1) << (i - 1))) % 256);
    }
  }
}

TEST_CASE("finger_start rejects out-of-range index") {
  RingSpace ring(8);
  CHECK_THROWS_AS(ring.finger_start({0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(ring.finger_start({0}, 9), std::invalid_argument);
}

TEST_CASE("hex round trip is fixed width and lowercase") {
  RingSpace ring(64);
  Identifier id = ring.hash_id("gw-1");
  std::string hex = ring.to_hex(id);
  CHECK(hex == "f5135b2765fda469");
  CHECK(hex.size() == 16);
  auto back = ring.parse_hex(hex);
  REQUIRE(back.has_value());
  CHECK(*back == id);

  RingSpace ring8(8);
  CHECK(ring8.to_hex({5}) == "05");
  CHECK_FALSE(ring8.parse_hex("5").has_value());
  CHECK_FALSE(ring8.parse_hex("0G").has_value());
}
