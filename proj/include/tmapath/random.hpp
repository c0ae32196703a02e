#pragma once

#include <cstdint>
#include <random>

namespace tmapath {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Child seeds are derived as
/// derive_seed(master, stream) = splitmix64(master ^ splitmix64(stream)).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream));
}

/// Uniform integer in [0, n) by rejection; identical on every standard library.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Reject the lowest 2^64 mod n draws so the remainder range divides evenly.
  const std::uint64_t threshold = (0 - n) % n;
  std::uint64_t v = rng();
  while (v < threshold) v = rng();
  return v % n;
}

/// Uniform real in [0, 1) from the top 53 bits.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace tmapath
