#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mckv/torus/grid.hpp"

namespace mckv {

namespace detail {

inline double periodic_gap(double a, double b, double length) {
  const double d = std::abs(a - b);
  return std::min(d, length - d);
}

/// Exact discrete optimal transport between supplies a and demands b (equal totals) with dense
/// cost matrix c (row-major, |a| x |b|), by successive shortest paths with Johnson potentials.
inline double min_cost_transport(const std::vector<double>& a, const std::vector<double>& b,
                                 const std::vector<double>& c) {
  const std::size_t ns = a.size(), nt = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  const double eps = 1e-15;
  std::vector<double> supply = a, demand = b, flow(ns * nt, 0.0);
  std::vector<double> pot_s(ns, 0.0), pot_t(nt, 0.0);
  std::vector<double> dist_s(ns), dist_t(nt);
  std::vector<long> prev_t(nt), prev_s(ns);  // sink reached from source; source reached back from sink
  std::vector<char> done_s(ns), done_t(nt);

  double remaining = 0.0;
  for (double v : supply) remaining += v;
  while (remaining > 1e-14) {
    std::fill(dist_s.begin(), dist_s.end(), inf);
    std::fill(dist_t.begin(), dist_t.end(), inf);
    std::fill(done_s.begin(), done_s.end(), 0);
    std::fill(done_t.begin(), done_t.end(), 0);
    std::fill(prev_s.begin(), prev_s.end(), -1);
    for (std::size_t i = 0; i < ns; ++i)
      if (supply[i] > eps) dist_s[i] = 0.0;

    long target = -1;
    for (;;) {
      // pick the closest unsettled node (sources first on ties)
      double best = inf;
      long bi = -1;
      bool is_source = true;
      for (std::size_t i = 0; i < ns; ++i)
        if (!done_s[i] && dist_s[i] < best) best = dist_s[i], bi = static_cast<long>(i), is_source = true;
      for (std::size_t j = 0; j < nt; ++j)
        if (!done_t[j] && dist_t[j] < best) best = dist_t[j], bi = static_cast<long>(j), is_source = false;
      if (bi < 0) break;
      if (is_source) {
        done_s[bi] = 1;
        for (std::size_t j = 0; j < nt; ++j) {
          if (done_t[j]) continue;
          const double rc = c[bi * nt + j] + pot_s[bi] - pot_t[j];
          const double nd = best + std::max(rc, 0.0);
          if (nd < dist_t[j]) dist_t[j] = nd, prev_t[j] = bi;
        }
      } else {
        done_t[bi] = 1;
        if (demand[bi] > eps) {
          target = bi;
          break;
        }
        for (std::size_t i = 0; i < ns; ++i) {
          if (done_s[i] || flow[i * nt + bi] <= eps) continue;
          const double rc = -c[i * nt + bi] + pot_t[bi] - pot_s[i];
          const double nd = best + std::max(rc, 0.0);
          if (nd < dist_s[i]) dist_s[i] = nd, prev_s[i] = bi;
        }
      }
    }
    if (target < 0) break;
    const double dt = dist_t[target];
    for (std::size_t i = 0; i < ns; ++i) pot_s[i] += std::min(dist_s[i], dt);
    for (std::size_t j = 0; j < nt; ++j) pot_t[j] += std::min(dist_t[j], dt);

    // bottleneck along the alternating path ending at target
    double push = demand[target];
    long j = target;
    long i = prev_t[j];
    for (;;) {
      if (prev_s[i] < 0) {
        push = std::min(push, supply[i]);
        break;
      }
      const long jb = prev_s[i];
      push = std::min(push, flow[i * nt + jb]);
      j = jb;
      i = prev_t[j];
    }
    j = target;
    i = prev_t[j];
    demand[target] -= push;
    for (;;) {
      flow[i * nt + j] += push;
      if (prev_s[i] < 0) {
        supply[i] -= push;
        break;
      }
      const long jb = prev_s[i];
      flow[i * nt + jb] -= push;
      j = jb;
      i = prev_t[j];
    }
    remaining -= push;
  }
  double cost = 0.0;
  for (std::size_t k = 0; k < flow.size(); ++k) cost += flow[k] * c[k];
  return cost;
}

inline double lp_oracle(const GridDensity& mu, const GridDensity& nu, int power) {
  require_same_grid(mu.grid(), nu.grid());
  const TorusGrid& g = mu.grid();
  if (g.size() > 4096) throw SizeLimit("transport LP oracle is limited to 4096 cells");
  const std::size_t size = g.size();
  const int n = g.cells_per_dim();
  const double vol = g.cell_volume();
  std::vector<double> a(size), b(size), c(size * size);
  for (std::size_t i = 0; i < size; ++i) {
    a[i] = mu[i] * vol;
    b[i] = nu[i] * vol;
  }
  const auto coord = [&](std::size_t i, int axis) {
    if (g.dim() == 1) return g.center(static_cast<int>(i));
    return g.center(static_cast<int>(axis == 0 ? i / n : i % n));
  };
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      double d2 = 0.0;
      for (int axis = 0; axis < g.dim(); ++axis) {
        const double d = periodic_gap(coord(i, axis), coord(j, axis), g.length());
        d2 += d * d;
      }
      c[i * size + j] = power == 2 ? d2 : std::sqrt(d2);
    }
  return min_cost_transport(a, b, c);
}

}  // namespace detail

/// W₂ between the cell-centre atomic measures by exact discrete transport (tests only).
inline double w2_lp_oracle(const GridDensity& mu, const GridDensity& nu) {
  return std::sqrt(std::max(0.0, detail::lp_oracle(mu, nu, 2)));
}

/// W₁ counterpart of w2_lp_oracle.
inline double w1_lp_oracle(const GridDensity& mu, const GridDensity& nu) { return detail::lp_oracle(mu, nu, 1); }

}  // namespace mckv
