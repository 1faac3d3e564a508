#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace no2 {

/// Deterministic RNG. Distribution sampling is implemented on top of the
/// raw mt19937_64 stream rather than <random> distributions, whose output
/// is implementation-defined; identical seeds must reproduce identical
/// streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  /// Derives an independent stream, e.g. one per MCMC chain.
  Rng fork(std::uint64_t salt) const {
    return Rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
  }

  std::uint64_t raw() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a log argument.
  double uniform_pos() { return ((gen_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Index in [0, n).
  std::size_t index(std::size_t n) {
    if (n == 0) return 0;
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Standard normal via the polar method (with spare caching).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, scale=1), Marsaglia-Tsang.
  double gamma(double shape) {
    if (shape < 1.0)
      return gamma(shape + 1.0) * std::pow(uniform_pos(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Inverse-gamma(shape, rate): density ∝ x^{-shape-1} exp(-rate/x).
  double inv_gamma(double shape, double rate) { return rate / gamma(shape); }

  /// Lognormal with given log-median and log-sd.
  double lognormal(double log_median, double log_sd) {
    return std::exp(log_median + log_sd * normal());
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0;
};

}  // namespace no2
