#pragma once

#include <cstdint>
#include <random>

#include <boost/random/laplace_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "gbmm/types.hpp"

namespace gbmm {

// std::mt19937_64 is bit-specified by the standard; the Boost distributions
// are platform independent, unlike the <random> ones.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives the seed of sub-stream `index` from `master`. Streams with
/// different `domain` tags never collide for the same (master, index).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                    std::uint64_t domain = 0) {
  return mix64(mix64(master ^ mix64(domain)) + index);
}

inline double uniform01(Rng& rng) { return boost::random::uniform_01<double>{}(rng); }

inline double standard_normal(Rng& rng) {
  return boost::random::normal_distribution<double>{0.0, 1.0}(rng);
}

/// Circularly-symmetric complex Gaussian with unit variance, CN(0, 1).
inline Complex complex_normal(Rng& rng) {
  constexpr double kHalf = 0.70710678118654752440;
  const double re = standard_normal(rng);
  const double im = standard_normal(rng);
  return {kHalf * re, kHalf * im};
}

inline double laplace(Rng& rng, double scale) {
  if (scale == 0.0) return 0.0;
  return boost::random::laplace_distribution<double>{0.0, scale}(rng);
}

}  // namespace gbmm
