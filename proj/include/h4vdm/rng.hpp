#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace h4vdm {

// Deterministic RNG: mt19937_64 (whose raw output sequence is pinned by the
// standard) plus hand-rolled distributions, because std:: distribution
// implementations vary across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + uniform() * (b - a); }

  // [0, n), n > 0
  uint64_t uniform_int(uint64_t n) { return gen_() % n; }

  // Box-Muller; the second value of each pair is discarded for simplicity
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
  }

  // normal(0, stddev) rejected outside +-limit
  double truncated_normal(double stddev, double limit) {
    for (;;) {
      double z = normal(0.0, stddev);
      if (z >= -limit && z <= limit) return z;
    }
  }

  template <typename It>
  void shuffle(It first, It last) {
    // Fisher-Yates with our own index draws (std::shuffle is unspecified)
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 finalizer: cheap, well-mixed way to derive substream seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace h4vdm
