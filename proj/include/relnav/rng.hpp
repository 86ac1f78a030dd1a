#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "relnav/types.hpp"

namespace relnav {

// Deterministic random stream. Gaussian draws use an explicit Box-Muller
// transform instead of std::normal_distribution so traces are reproducible
// across standard-library implementations, not just across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
      u1 = uniform();
    }
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double sigma) { return sigma * gaussian(); }

  Vec3 gaussian_vec3(double sigma) {
    return {gaussian(sigma), gaussian(sigma), gaussian(sigma)};
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Stable per-stream seed derivation (splitmix64 of seed XOR tag).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_tag) {
  std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (stream_tag + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace relnav
