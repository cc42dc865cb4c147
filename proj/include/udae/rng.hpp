#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace udae {

// All sampling goes through these helpers rather than std::*_distribution,
// so that streams are bit-identical across standard library implementations.

inline double uniform01(std::mt19937 &rng) {
  // 32 uniform bits into (0,1); never returns 0 or 1 exactly.
  return (static_cast<double>(rng()) + 0.5) * (1.0 / 4294967296.0);
}

inline double uniform(std::mt19937 &rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller, consumes two draws per call.
inline double gaussian(std::mt19937 &rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline double gaussian(std::mt19937 &rng, double mean, double stddev) {
  return mean + stddev * gaussian(rng);
}

// Stream splitter for deriving independent per-item seeds from a run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::mt19937 make_rng(std::uint64_t seed) {
  return std::mt19937(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
}

template <typename It> void shuffle_indices(It first, It last, std::mt19937 &rng) {
  auto n = last - first;
  for (decltype(n) i = n - 1; i > 0; --i) {
    auto j = static_cast<decltype(n)>(rng() % static_cast<std::uint32_t>(i + 1));
    std::swap(first[i], first[j]);
  }
}

} // namespace udae
