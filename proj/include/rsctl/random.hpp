#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace rsctl {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based split: sub-seed `index` of stream `stream` never depends on
// how many other sub-seeds were drawn.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ splitmix64(stream)) + index);
}

// Uniform on [0, 1) with 53 random bits. Portable across standard libraries,
// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double exponential(Rng& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

inline int uniform_index(Rng& rng, int n) {
  auto k = static_cast<int>(uniform01(rng) * n);
  return k < n ? k : n - 1;
}

// Samples an index with probability proportional to `weights` (nonnegative,
// positive sum).
inline int sample_discrete(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = uniform01(rng) * total;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    if (target < weights[i]) return last_positive;
    target -= weights[i];
  }
  return last_positive;
}

}  // namespace rsctl
