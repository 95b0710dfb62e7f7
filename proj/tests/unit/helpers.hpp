#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mckv/torus/grid.hpp"

namespace mckv::test {

/// Random trigonometric polynomial with modes |k| <= kmax (well below Nyquist).
inline GridFunction random_band_limited(const TorusGrid& g, std::mt19937_64& rng, int kmax = 5) {
  std::normal_distribution<double> z;
  const double w0 = 2.0 * std::numbers::pi / g.length();
  std::vector<double> a(kmax + 1), b(kmax + 1), c(kmax + 1), e(kmax + 1);
  for (int k = 0; k <= kmax; ++k) {
    a[k] = z(rng);
    b[k] = z(rng);
    c[k] = z(rng);
    e[k] = z(rng);
  }
  if (g.dim() == 1) {
    return GridFunction::sample(g, [&](double x) {
      double s = a[0];
      for (int k = 1; k <= kmax; ++k) s += a[k] * std::cos(w0 * k * x) + b[k] * std::sin(w0 * k * x);
      return s;
    });
  }
  return GridFunction::sample(g, [&](double x, double y) {
    double s = a[0];
    for (int k = 1; k <= kmax; ++k) {
      s += a[k] * std::cos(w0 * k * x) + b[k] * std::sin(w0 * k * y) + c[k] * std::cos(w0 * k * (x + y)) +
           e[k] * std::sin(w0 * (k * x - y));
    }
    return s;
  });
}

/// Strictly positive smooth random density.
inline GridDensity random_smooth_density(const TorusGrid& g, std::mt19937_64& rng, int kmax = 4,
                                         double strength = 1.0) {
  const GridFunction f = random_band_limited(g, rng, kmax);
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(strength * f[i] / std::sqrt(double(kmax)));
  return GridDensity::normalized(g, std::move(v));
}

/// Root of r = I₁(βr)/I₀(βr) by bisection: the order parameter of the von Mises branch for -cos on L = 2π.
inline double bessel_order(double beta) {
  double lo = 1e-6, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double r = 0.5 * (lo + hi);
    const double g = std::cyl_bessel_i(1.0, beta * r) / std::cyl_bessel_i(0.0, beta * r) - r;
    (g > 0 ? lo : hi) = r;
  }
  return 0.5 * (lo + hi);
}

}  // namespace mckv::test
