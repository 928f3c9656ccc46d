#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace hil {

/// Seeded random stream with a fully specified uniform and Gaussian mapping.
/// std::normal_distribution is implementation-defined, which would break
/// cross-host reproducibility of lockstep runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (second variate cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = mag * std::sin(angle);
    has_spare_ = true;
    return mag * std::cos(angle);
  }

  double normal(double sd) { return sd == 0.0 ? 0.0 : sd * normal(); }

  /// Derives an independent child stream (splitmix64 of seed and stream id).
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hil
