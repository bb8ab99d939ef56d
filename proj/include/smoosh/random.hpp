#pragma once

// Seeding discipline for replica-parallel runs: one master seed, per-replica
// streams derived by a counter-based split.

#include <cstdint>
#include <random>

namespace smoosh {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer applied to x + golden gamma. A bijection on uint64.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of sub-stream `stream` under `master`. For a fixed master the map
/// stream -> seed is injective (odd-multiplier offset composed with a
/// bijective mixer), so replica seeds never collide within a run.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return splitmix64(master + 0xd1b54a32d192ed03ULL * stream);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream) {
  return Rng(derive_seed(master, stream));
}

template <class URBG>
double uniform01(URBG& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <class URBG>
bool bernoulli(URBG& rng, double p) {
  return uniform01(rng) < p;
}

}  // namespace smoosh
