#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace nibkit {

// SplitMix64 finalizer: full-avalanche 64-bit hash.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2)));
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x6e69626b69742e31ull;  // arbitrary domain tag
  for (auto k : keys) h = hash_mix(h, k);
  return h;
}

inline double u64_to_unit(std::uint64_t u) { return double(u >> 11) * 0x1.0p-53; }  // [0,1)

// Counter-based deterministic RNG: the i-th draw is a pure function of
// (keys..., i), so substreams never interleave and results do not depend on
// call-site ordering elsewhere in the program.
class CounterRng {
public:
  explicit CounterRng(std::initializer_list<std::uint64_t> keys) : state_(hash_key(keys)) {}

  std::uint64_t next_u64() { return splitmix64(state_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  double uniform() { return u64_to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller from two hashed uniforms; consumes exactly two draws.
  double gaussian(double mean, double sigma) {
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased-enough integer in [lo, hi) via 128-bit multiply.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi_excl) {
    auto span = static_cast<std::uint64_t>(hi_excl - lo);
    auto scaled = static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * span) >> 64);
    return lo + static_cast<std::int64_t>(scaled);
  }

private:
  std::uint64_t state_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace nibkit
