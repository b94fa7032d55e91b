#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ravl {

// 64-bit FNV-1a. Used for token bucketing and config fingerprints because the
// result must be identical across platforms and standard library versions
// (std::hash makes no such promise).
inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// splitmix64 finalizer: cheap, well-mixed derivation of per-epoch / per-stream
// seeds from a base seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform double in [0, 1) from the top 53 bits of the generator output.
// Hand-rolled (not std::uniform_real_distribution) so results are identical
// on every platform.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

// Standard normal via Box-Muller on uniform01. std::normal_distribution is
// implementation-defined, which would break cross-platform reproducibility of
// encoder initialization.
inline double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  // Guard the log: uniform01 can return exactly 0.
  while (u1 <= 0.0) u1 = uniform01(rng);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace ravl
