#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace dsu {

// std::mt19937_64 is fully specified by the standard, but the
// std::*_distribution adaptors are not. These helpers derive everything from
// raw engine output so sampling is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open_low() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

  /// Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Laplace(0, scale) by inverse CDF.
  double laplace(double scale = 1.0) {
    const double u = uniform() - 0.5;
    const double a = 1.0 - 2.0 * std::abs(u);
    return -scale * std::copysign(1.0, u) * std::log(a > 0.0 ? a : 0x1.0p-53);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dsu
