#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "mckv/torus/grid.hpp"

namespace mckv {

/// One cosine mode of an interaction potential: weight * cos(2π k x / L).
struct CosineMode {
  int wavenumber;
  double weight;
};

/// W(x) = Σ weight·cos(2πk x/L); in 2-D the same profile is applied along both axes,
/// W(x, y) = Σ weight·(cos(2πk x/L) + cos(2πk y/L)), which keeps W even in each coordinate.
inline GridFunction cosine_potential(const TorusGrid& grid, const std::vector<CosineMode>& modes) {
  const double w0 = 2.0 * std::numbers::pi / grid.length();
  const auto profile = [&](double x) {
    double s = 0.0;
    for (const auto& m : modes) s += m.weight * std::cos(w0 * m.wavenumber * x);
    return s;
  };
  if (grid.dim() == 1) return GridFunction::sample(grid, profile);
  return GridFunction::sample(grid, [&](double x, double y) { return profile(x) + profile(y); });
}

/// W(x) = -cos(2πx/L).
inline GridFunction negative_cosine(const TorusGrid& grid) { return cosine_potential(grid, {{1, -1.0}}); }

/// W(x) = -a (cos(2πx/L) + cos(4πx/L)); both leading modes tie, giving a resonant triple.
inline GridFunction resonant_potential(const TorusGrid& grid, double amplitude = 1.0) {
  return cosine_potential(grid, {{1, -amplitude}, {2, -amplitude}});
}

}  // namespace mckv
