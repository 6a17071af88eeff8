#pragma once

#include <cstdint>
#include <random>

namespace plr {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream splitting: stream r of master seed s is hash64(s, r).
constexpr std::uint64_t hash64(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

/// Uniform on the open interval (0, 1).
inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  double u = d(rng);
  while (u <= 0.0) u = d(rng);
  return u;
}

}  // namespace plr
