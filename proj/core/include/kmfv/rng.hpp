#pragma once

#include <cmath>
#include <cstdint>

#include "kmfv/detmath.hpp"

// Self-contained xoshiro256** generator. std::uniform_*_distribution output
// is implementation-defined, so every sampling transform lives here and
// produces the same stream for the same seed on every platform.

namespace kmfv {

class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    // splitmix64 seeding
    std::uint64_t x = seed;
    for (auto& si : s_) {
      x += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      si = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // standard normal via the polar (Marsaglia) method; no trig involved
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = sqrt_scale(q);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  Rng fork() { return Rng(next_u64()); }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static double sqrt_scale(double q) {
    return std::sqrt(-2.0 * detmath::log_d(q) / q);
  }

  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

} // namespace kmfv
