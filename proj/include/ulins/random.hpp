#pragma once

// Deterministic RNG plumbing. Every consumer (simulator channels, per-anchor
// RANSAC) owns its own engine seeded through derive_seed, so adding or
// reordering draws in one consumer never shifts the stream of another.
// Gaussian and bounded-int draws are hand-rolled on top of the raw engine
// output with a fixed draw count, which keeps output byte-reproducible.

#include <cstdint>
#include <cmath>
#include <random>

namespace ulins {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable substream seed from a base seed and up to two tags.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag_a,
                                 std::uint64_t tag_b = 0) {
  std::uint64_t x = splitmix64(base ^ 0x5851f42d4c957f2dull);
  x = splitmix64(x ^ tag_a);
  x = splitmix64(x ^ tag_b);
  return x;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without caching: exactly two engine draws per call.
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = eng_();
      if (x >= threshold) return x % n;
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ulins
