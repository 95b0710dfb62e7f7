#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mckv/torus/grid.hpp"
#include "mckv/torus/spectral.hpp"

namespace mckv {

/// Cumulative masses of the cell-centre atomic measure Σ ρ_j h δ_{x_j} at cell right edges.
struct QuantileProfile {
  TorusGrid grid;
  std::vector<double> cdf;
  double shift = 0.0;

  explicit QuantileProfile(const GridDensity& mu) : grid(mu.grid()), cdf(mu.size()) {
    if (grid.dim() != 1) throw DimensionUnsupported(grid.dim());
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      s += mu[j] * grid.cell_volume();
      cdf[j] = s;
    }
    for (double& v : cdf) v /= s;  // exact unit total
  }

  /// Q(q) for q in (0, 1]: centre of the first cell whose cumulative mass reaches q.
  double quantile(double q) const {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), q);
    const std::size_t j = it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
    return grid.center(static_cast<int>(j));
  }

  /// Quasi-periodic lift: Q(q + m) = Q(q) + mL.
  double lifted(double q) const {
    const double m = std::ceil(q) - 1.0;  // q - m in (0, 1]
    return quantile(q - m) + m * grid.length();
  }
};

namespace detail {

inline void require_1d(const GridDensity& mu, const GridDensity& nu) {
  require_same_grid(mu.grid(), nu.grid());
  if (mu.grid().dim() != 1) throw DimensionUnsupported(mu.grid().dim());
}

/// ∫₀¹ |Q_μ(q) - Q_ν(q + θ)|² dq, exact for step quantiles.
inline double cut_cost(const QuantileProfile& a, const QuantileProfile& b, double theta) {
  std::vector<double> bp;
  bp.reserve(a.cdf.size() + b.cdf.size() + 2);
  bp.push_back(0.0);
  bp.push_back(1.0);
  for (double c : a.cdf) bp.push_back(c);
  for (double c : b.cdf) {
    double q = c - theta;
    q -= std::floor(q);
    bp.push_back(q);
  }
  std::sort(bp.begin(), bp.end());
  double s = 0.0;
  for (std::size_t i = 1; i < bp.size(); ++i) {
    const double w = bp[i] - bp[i - 1];
    if (w <= 0.0) continue;
    const double mid = 0.5 * (bp[i] + bp[i - 1]);
    const double d = a.lifted(mid) - b.lifted(mid + theta);
    s += w * d * d;
  }
  return s;
}

struct CutOptimum {
  double theta;
  double cost;
};

/// Golden-section search over θ ∈ [-1, 1] of the convex cut cost, then a local polish over the
/// nearby breakpoints where the piecewise-smooth cost has its kinks.
inline CutOptimum optimal_cut(const QuantileProfile& a, const QuantileProfile& b) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -1.0, hi = 1.0;
  double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
  double f1 = cut_cost(a, b, x1), f2 = cut_cost(a, b, x2);
  while (hi - lo > 1e-13) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = cut_cost(a, b, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = cut_cost(a, b, x2);
    }
  }
  CutOptimum best{x1, f1};
  if (f2 < best.cost) best = {x2, f2};
  // kinks sit where a ν-breakpoint crosses a μ-breakpoint: θ = c_ν - c_μ (mod 1)
  for (double ca : a.cdf) {
    for (double cb : b.cdf) {
      double t = cb - ca;
      for (double cand : {t - 1.0, t, t + 1.0}) {
        if (std::abs(cand - best.theta) > 1e-9 || cand < -1.0 || cand > 1.0) continue;
        const double f = cut_cost(a, b, cand);
        if (f < best.cost || (f == best.cost && cand < best.theta)) best = {cand, f};
      }
    }
  }
  return best;
}

}  // namespace detail

/// Periodic W₂ between the cell-centre atomic measures of μ and ν (d = 1).
inline double w2_periodic_1d(const GridDensity& mu, const GridDensity& nu) {
  detail::require_1d(mu, nu);
  const QuantileProfile a(mu), b(nu);
  return std::sqrt(std::max(0.0, detail::optimal_cut(a, b).cost));
}

/// Periodic W₁: h Σ_j |D_j - s| with D the cumulative mass difference and s its median.
inline double w1_periodic_1d(const GridDensity& mu, const GridDensity& nu) {
  detail::require_1d(mu, nu);
  const TorusGrid& g = mu.grid();
  std::vector<double> d(mu.size());
  double s = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    s += (mu[j] - nu[j]) * g.cell_volume();
    d[j] = s;
  }
  std::vector<double> sorted = d;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = sorted[sorted.size() / 2];
  double w = 0.0;
  for (double v : d) w += std::abs(v - med);
  return w * g.spacing();
}

/// McCann interpolant at time t, from the optimal cut: each quantile slab moves from Q_μ(q) to
/// Q_ν(q + θ*) on straight lines, then is deposited on the grid by cloud-in-cell weights.
inline GridDensity displacement_interpolation_1d(const GridDensity& mu, const GridDensity& nu, double t) {
  detail::require_1d(mu, nu);
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("interpolation time must lie in [0, 1]");
  if (t == 0.0) return mu;
  if (t == 1.0) return nu;
  const TorusGrid& g = mu.grid();
  const QuantileProfile a(mu), b(nu);
  const double theta = detail::optimal_cut(a, b).theta;

  std::vector<double> bp{0.0, 1.0};
  for (double c : a.cdf) bp.push_back(c);
  for (double c : b.cdf) {
    double q = c - theta;
    bp.push_back(q - std::floor(q));
  }
  std::sort(bp.begin(), bp.end());
  const int n = g.cells_per_dim();
  const double h = g.spacing();
  std::vector<double> mass(n, 0.0);
  for (std::size_t i = 1; i < bp.size(); ++i) {
    const double w = bp[i] - bp[i - 1];
    if (w <= 0.0) continue;
    const double mid = 0.5 * (bp[i] + bp[i - 1]);
    const double x = (1.0 - t) * a.lifted(mid) + t * b.lifted(mid + theta);
    // cloud-in-cell between neighbouring centres
    const double u = x / h - 0.5;
    const double fl = std::floor(u);
    const double frac = u - fl;
    const int j = static_cast<int>(fl);
    mass[g.wrap(j)] += w * (1.0 - frac);
    mass[g.wrap(j + 1)] += w * frac;
  }
  return GridDensity::normalized(g, std::move(mass));
}

/// ‖r‖²_{Ḣ⁻¹} = Σ_{k≠0} |r̂(k)|² / (2π|k|/L)² for mean-zero r.
inline double hminus1_norm_squared(const GridFunction& r) {
  const double mean = integrate(r);
  if (std::abs(mean) > 1e-10) throw NonZeroMean(mean);
  const TorusGrid& g = r.grid();
  const FourierCoeffs c = fourier_coefficients(r);
  const double w0 = 2.0 * std::numbers::pi / g.length();
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Wavevector k = c.wavevector(i);
    const double k2 = double(k[0]) * k[0] + double(k[1]) * k[1];
    if (k2 == 0.0) continue;
    s += std::norm(c[i]) / (w0 * w0 * k2);
  }
  return s;
}

inline double hminus1_norm(const GridFunction& r) { return std::sqrt(hminus1_norm_squared(r)); }

inline GridFunction difference(const GridDensity& mu, const GridDensity& nu) {
  require_same_grid(mu.grid(), nu.grid());
  std::vector<double> v(mu.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mu[i] - nu[i];
  return GridFunction(mu.grid(), std::move(v));
}

struct ComparisonReport {
  double hminus1 = 0.0;
  double w2 = 0.0;
  double w1 = 0.0;
  double max_density = 0.0;
  /// ‖μ-ν‖_{Ḣ⁻¹} ≤ max(‖μ‖∞, ‖ν‖∞)^{1/2} W₂
  double lhs = 0.0, rhs = 0.0, slack = 0.0;
  bool pass = false;
  /// W₁ ≤ L^{d/2} ‖μ-ν‖_{Ḣ⁻¹}
  double w1_rhs = 0.0;
  bool w1_pass = false;
};

inline constexpr double kComparisonSlack = 1.05;

inline ComparisonReport comparison_check(const GridDensity& mu, const GridDensity& nu) {
  detail::require_1d(mu, nu);
  ComparisonReport r;
  r.hminus1 = hminus1_norm(difference(mu, nu));
  r.w2 = w2_periodic_1d(mu, nu);
  r.w1 = w1_periodic_1d(mu, nu);
  r.max_density = std::max(mu.max(), nu.max());
  r.lhs = r.hminus1;
  r.rhs = std::sqrt(r.max_density) * r.w2;
  r.slack = r.rhs - r.lhs;
  r.pass = r.lhs <= kComparisonSlack * r.rhs;
  r.w1_rhs = std::sqrt(mu.grid().length()) * r.hminus1;
  r.w1_pass = r.w1 <= kComparisonSlack * r.w1_rhs;
  return r;
}

}  // namespace mckv
