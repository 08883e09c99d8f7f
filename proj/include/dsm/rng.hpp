#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dsm/space.hpp"

namespace dsm {

// Deterministic sampling with hand-rolled transforms on the raw mt19937_64 stream. The std::
// distributions are implementation-defined, which would break bit-for-bit reproducibility of
// artifacts across standard libraries. Every transform consumes a fixed number of raw draws, so
// extending a sample run keeps its prefix intact (the monotone-estimator property relies on it).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {  // Box-Muller, two draws consumed, cosine branch
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double exponential() {  // mean 1
    return -std::log(1.0 - uniform());
  }

  Vec gaussian_vec(int n) {
    Vec v(static_cast<std::size_t>(n));
    for (auto& x : v) x = gaussian();
    return v;
  }

  // Direction of unit length in `kind`; falls back to the first basis vector on a (measure-zero)
  // zero draw.
  Vec unit_direction(int n, NormKind kind) {
    Vec v(static_cast<std::size_t>(n));
    if (kind == NormKind::L1) {
      for (auto& x : v) {
        double sign = uniform() < 0.5 ? -1.0 : 1.0;
        x = sign * exponential();
      }
    } else if (kind == NormKind::Linf) {
      for (auto& x : v) x = 2.0 * uniform() - 1.0;
    } else {
      for (auto& x : v) x = gaussian();
    }
    double len = norm(v, kind);
    if (len == 0.0) {
      v.assign(v.size(), 0.0);
      v[0] = 1.0;
      return v;
    }
    for (auto& x : v) x /= len;
    return v;
  }

  // Uniform point in the ball B(center, radius) of `kind`. L2 via gaussian direction and
  // radial inverse-CDF, L1 via Laplace normalization, Linf coordinate-wise.
  Vec ball_point(const Vec& center, double radius, NormKind kind) {
    const int n = static_cast<int>(center.size());
    Vec v(center.size());
    if (kind == NormKind::Linf) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + radius * (2.0 * uniform() - 1.0);
      return v;
    }
    Vec dir = unit_direction(n, kind);
    double rad = radius * std::pow(uniform(), 1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + rad * dir[i];
    return v;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dsm
