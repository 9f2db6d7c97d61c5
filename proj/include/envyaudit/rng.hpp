#pragma once
/*
 * Deterministic randomness.
 *
 * Distribution sampling is implemented directly on the raw mt19937_64 output
 * (the engine's stream is fixed by the standard, the library distributions
 * are not), so every experiment is bit-reproducible across platforms and
 * standard libraries. Seed derivation for sub-streams uses a splitmix-style
 * mix so results do not depend on scheduling order.
 */
#include <cstdint>
#include <random>
#include <string_view>

namespace envyaudit {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable combiner for deriving sub-seeds from (seed, id, id, ...) tuples.
// Mixing h before the xor keeps the combiner sensitive to argument order.
constexpr std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
  return splitmix64(splitmix64(h) ^ v);
}

// FNV-1a over bytes, for hashing experiment identifiers into seed material.
constexpr std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // p = 0 and p = 1 are exact: uniform01() lies in [0, 1).
  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform on {0, ..., n-1}; rejection keeps the distribution exact.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = ~std::uint64_t{0};
    const std::uint64_t limit = max - max % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace envyaudit
