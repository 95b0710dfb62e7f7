#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mckv/free_energy.hpp"
#include "mckv/gradient_flow.hpp"
#include "mckv/parallel.hpp"
#include "mckv/self_consistency.hpp"
#include "mckv/wasserstein.hpp"

namespace mckv {

enum class Parametrisation { L2, Quantile };

inline std::string to_string(Parametrisation p) { return p == Parametrisation::L2 ? "L2" : "Quantile"; }

inline Parametrisation parametrisation_from_string(const std::string& s) {
  if (s == "L2") return Parametrisation::L2;
  if (s == "Quantile") return Parametrisation::Quantile;
  throw InvalidArgument("unknown parametrisation '" + s + "'");
}

struct TransportPath {
  std::vector<GridDensity> beads;
  Parametrisation parametrisation = Parametrisation::L2;
  bool endpoint_lock = true;

  friend bool operator==(const TransportPath&, const TransportPath&) = default;
};

inline constexpr int kMinBeads = 8;
/// μ* counts as distinct from an endpoint above this TV distance.
inline constexpr double kDistinctTv = 0.01;

namespace detail {

inline GridDensity mixture(const GridDensity& a, const GridDensity& b, double t) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - t) * a[i] + t * b[i];
  return renormalized(a.grid(), std::move(v));
}

inline GridDensity interpolate(const GridDensity& a, const GridDensity& b, double t, Parametrisation p) {
  return p == Parametrisation::L2 ? mixture(a, b, t) : displacement_interpolation_1d(a, b, t);
}

inline double l2_distance(const GridDensity& a, const GridDensity& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s * a.grid().cell_volume());
}

inline double bead_distance(const GridDensity& a, const GridDensity& b, Parametrisation p) {
  return p == Parametrisation::L2 ? l2_distance(a, b) : w2_periodic_1d(a, b);
}

}  // namespace detail

/// B beads at t = i/(B-1) between μ_a and μ_b: convex mixtures (L2) or McCann interpolants (Quantile, d = 1).
inline TransportPath init_string(const GridDensity& mu_a, const GridDensity& mu_b, int beads,
                                 Parametrisation mode = Parametrisation::L2) {
  require_same_grid(mu_a.grid(), mu_b.grid());
  if (beads < kMinBeads) throw InvalidArgument("a string needs at least 8 beads");
  if (mode == Parametrisation::Quantile && mu_a.grid().dim() != 1) throw DimensionUnsupported(mu_a.grid().dim());
  TransportPath path;
  path.parametrisation = mode;
  path.beads.reserve(beads);
  path.beads.push_back(mu_a);
  for (int i = 1; i < beads - 1; ++i)
    path.beads.push_back(detail::interpolate(mu_a, mu_b, double(i) / (beads - 1), mode));
  path.beads.push_back(mu_b);
  return path;
}

/// Consecutive bead distances in the path's own metric.
inline std::vector<double> bead_spacings(const TransportPath& path) {
  std::vector<double> d;
  for (std::size_t i = 1; i < path.beads.size(); ++i)
    d.push_back(detail::bead_distance(path.beads[i - 1], path.beads[i], path.parametrisation));
  return d;
}

/// Redistributes the beads at equal arclength along the piecewise-interpolated string.
inline void reparametrise(TransportPath& path) {
  const std::size_t b = path.beads.size();
  const std::vector<double> d = bead_spacings(path);
  std::vector<double> s(b, 0.0);
  for (std::size_t i = 1; i < b; ++i) s[i] = s[i - 1] + d[i - 1];
  const double total = s.back();
  if (!(total > 0.0)) return;
  std::vector<GridDensity> out;
  out.reserve(b);
  out.push_back(path.beads.front());
  std::size_t seg = 1;
  for (std::size_t i = 1; i + 1 < b; ++i) {
    const double target = total * double(i) / double(b - 1);
    while (seg < b - 1 && s[seg] < target) ++seg;
    const double len = s[seg] - s[seg - 1];
    const double t = len > 0.0 ? std::clamp((target - s[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out.push_back(detail::interpolate(path.beads[seg - 1], path.beads[seg], t, path.parametrisation));
  }
  out.push_back(path.beads.back());
  path.beads = std::move(out);
}

struct StringRelaxOptions {
  int steps = 2000;
  double dt = 0.0;  // 0 selects default_time_step
  unsigned threads = 1;
  int stagnation_window = 50;
  double stagnation_tol = 1e-12;
};

struct StringRelaxResult {
  TransportPath path;
  std::vector<double> max_energy;  // max bead energy after each macro-iteration
  int iterations = 0;
  bool stagnated = false;
  /// Max-bead energy never rose by more than 1e-7 between macro-iterations.
  bool monotone = true;
};

/// Simplified string method: one flow step per movable bead, then equal-arclength reparametrisation.
inline StringRelaxResult string_relax(const FreeEnergyModel& model, TransportPath path,
                                      const StringRelaxOptions& opt = {}) {
  if (path.beads.size() < static_cast<std::size_t>(kMinBeads)) throw InvalidArgument("a string needs at least 8 beads");
  for (const GridDensity& b : path.beads) require_same_grid(model.grid(), b.grid());
  const double dt = opt.dt == 0.0 ? default_time_step(model) : opt.dt;
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");

  const auto max_energy = [&] {
    double m = -std::numeric_limits<double>::infinity();
    for (const GridDensity& b : path.beads) m = std::max(m, free_energy(model, b));
    return m;
  };
  StringRelaxResult r;
  double prev = max_energy();
  int flat = 0;
  const std::size_t b = path.beads.size();
  const std::size_t first = path.endpoint_lock ? 1 : 0;
  const std::size_t count = path.endpoint_lock ? b - 2 : b;
  for (int it = 0; it < opt.steps; ++it) {
    parallel_for(count, opt.threads, [&](std::size_t k) {
      GridDensity& bead = path.beads[first + k];
      bead = flow_step(model, bead, dt);
    });
    reparametrise(path);
    const double e = max_energy();
    r.max_energy.push_back(e);
    r.iterations = it + 1;
    if (e > prev + 1e-7) r.monotone = false;
    flat = std::abs(e - prev) < opt.stagnation_tol ? flat + 1 : 0;
    prev = e;
    if (flat >= opt.stagnation_window) {
      r.stagnated = true;
      break;
    }
  }
  r.path = std::move(path);
  return r;
}

/// Max bead energy and its (lowest) index.
inline std::pair<double, std::size_t> barrier(const FreeEnergyModel& model, const TransportPath& path) {
  if (path.beads.empty()) throw InvalidArgument("empty path");
  double c = free_energy(model, path.beads[0]);
  std::size_t idx = 0;
  for (std::size_t i = 1; i < path.beads.size(); ++i) {
    const double e = free_energy(model, path.beads[i]);
    if (e > c) c = e, idx = i;
  }
  return {c, idx};
}

struct SaddleResult {
  GridDensity density;
  double residual = 0.0;
  double dissipation = 0.0;
  bool refined = false;
};

struct SaddleOptions {
  double tol = 1e-8;
  int newton_iter = 50;
  int climb_steps = 2000;
};

namespace detail {

inline SaddleResult saddle_result(const FreeEnergyModel& model, GridDensity mu, double tol) {
  const double res = fixed_point_residual(model, mu);
  const double dis = dissipation(model, mu);
  return SaddleResult{std::move(mu), res, dis, res <= tol};
}

/// Flow with the component along the tangent reversed, which turns the saddle into an attractor
/// in the tangent direction. τ is normalised in L² and has zero mass.
inline GridDensity climb(const FreeEnergyModel& model, const GridDensity& start, std::vector<double> tau, int steps) {
  const TorusGrid& g = model.grid();
  const double vol = g.cell_volume();
  double norm = 0.0;
  for (double v : tau) norm += v * v * vol;
  if (!(norm > 0.0)) return start;
  for (double& v : tau) v /= std::sqrt(norm);
  double dt = default_time_step(model);
  std::vector<double> rho = start.vector();
  for (int s = 0; s < steps; ++s) {
    GridDensity cur(g, rho);
    std::vector<double> next;
    try {
      next = flow_step(model, cur, dt).vector();
    } catch (const StepRejected&) {
      dt *= 0.5;
      if (dt < kMinTimeStep) break;
      continue;
    }
    double proj = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) proj += (next[i] - rho[i]) * tau[i] * vol;
    bool positive = true;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      next[i] -= 2.0 * proj * tau[i];
      positive = positive && next[i] > kPositivityFloor;
    }
    if (!positive) {
      dt *= 0.5;
      if (dt < kMinTimeStep) break;
      continue;
    }
    rho = renormalized(g, std::move(next)).vector();
  }
  return GridDensity(g, rho);
}

}  // namespace detail

/// Polishes a near-critical guess to a fixed point of F. In d = 1 this is Newton on even densities;
/// when that fails (or in d = 2) a climbing flow along `tangent` is run and Newton retried.
/// refined is false when the residual stays above tol; the best iterate is returned either way.
inline SaddleResult saddle_refine(const FreeEnergyModel& model, const GridDensity& guess, const SaddleOptions& opt = {},
                                  const std::vector<double>* tangent = nullptr) {
  if (!(opt.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  require_same_grid(model.grid(), guess.grid());
  SaddleResult best = detail::saddle_result(model, guess, opt.tol);
  if (best.refined) return best;
  const bool one_d = model.grid().dim() == 1;
  const auto consider = [&](const GridDensity& mu) {
    SaddleResult r = detail::saddle_result(model, mu, opt.tol);
    if (r.residual < best.residual) best = std::move(r);
  };
  if (one_d) {
    consider(newton_fixed_point(model, guess, opt.tol, opt.newton_iter).density);
    if (best.refined) return best;
  }
  if (tangent) {
    const GridDensity climbed = detail::climb(model, guess, *tangent, opt.climb_steps);
    consider(climbed);
    if (one_d && !best.refined) consider(newton_fixed_point(model, climbed, opt.tol, opt.newton_iter).density);
  }
  return best;
}

struct BarrierOptions {
  int beads = 17;
  Parametrisation mode = Parametrisation::L2;
  StringRelaxOptions relax{};
  SaddleOptions saddle{};
};

struct MountainPassReport {
  double c = 0.0;
  double delta = 0.0;
  std::optional<GridDensity> saddle;
  double saddle_residual = 0.0;
  double saddle_dissipation = 0.0;
  TransportPath path;
  bool converged = false;
  /// Max bead energy of the relaxed string and the bead it came from.
  double string_barrier = 0.0;
  std::size_t argmax = 0;
  /// Sampled maximum of I on the polyline segments adjacent to the top bead.
  double path_sup = 0.0;
  double endpoint_energy_a = 0.0, endpoint_energy_b = 0.0;
  double saddle_tv_a = 0.0, saddle_tv_b = 0.0;
  bool distinct = false;
  int relax_iterations = 0;
  std::vector<double> energy_profile;

  friend bool operator==(const MountainPassReport&, const MountainPassReport&) = default;
};

/// init_string → string_relax → barrier → saddle_refine. c = I(μ*) when a refined saddle is
/// accepted: residual within tol, energy between the endpoints' and the path maximum, and distinct
/// from both endpoints whenever the path rises above them. Otherwise c is the top bead energy.
inline MountainPassReport barrier_certificate(const FreeEnergyModel& model, const GridDensity& mu_a,
                                              const GridDensity& mu_b, const BarrierOptions& opt = {}) {
  require_same_grid(model.grid(), mu_a.grid());
  require_same_grid(model.grid(), mu_b.grid());
  MountainPassReport rep;
  rep.endpoint_energy_a = free_energy(model, mu_a);
  rep.endpoint_energy_b = free_energy(model, mu_b);
  const double floor = std::max(rep.endpoint_energy_a, rep.endpoint_energy_b);

  StringRelaxResult relaxed = string_relax(model, init_string(mu_a, mu_b, opt.beads, opt.mode), opt.relax);
  rep.relax_iterations = relaxed.iterations;
  rep.path = std::move(relaxed.path);
  for (const GridDensity& b : rep.path.beads) rep.energy_profile.push_back(free_energy(model, b));
  std::tie(rep.string_barrier, rep.argmax) = barrier(model, rep.path);

  const auto& beads = rep.path.beads;
  const std::size_t k = rep.argmax;
  const std::size_t lo = k == 0 ? 0 : k - 1, hi = std::min(k + 1, beads.size() - 1);
  // The polyline through the beads is itself an admissible path, so its maximum (sampled on the two
  // segments around the top bead) bounds c from above; the top bead alone may sit below the saddle.
  double path_sup = rep.string_barrier;
  for (int q = 1; q < 16; ++q) {
    const double t = q / 16.0;
    path_sup = std::max(path_sup, free_energy(model, detail::mixture(beads[lo], beads[k], t)));
    path_sup = std::max(path_sup, free_energy(model, detail::mixture(beads[k], beads[hi], t)));
  }
  rep.path_sup = path_sup;
  std::vector<double> tangent(mu_a.size());
  for (std::size_t i = 0; i < tangent.size(); ++i) tangent[i] = beads[hi][i] - beads[lo][i];

  const bool raised = path_sup - floor > 1e-6;
  const auto acceptable = [&](const SaddleResult& s) {
    if (!s.refined) return false;
    const double es = free_energy(model, s.density);
    const double tv_a = tv_distance(s.density, mu_a), tv_b = tv_distance(s.density, mu_b);
    return es <= path_sup + 1e-6 && es >= floor - 1e-9 && (!raised || (tv_a > kDistinctTv && tv_b > kDistinctTv));
  };
  // Newton may fall off a saddle into a neighbouring minimum; try the top bead, the segment
  // midpoints around it and its neighbours before giving up.
  std::vector<GridDensity> guesses{beads[k]};
  if (lo != k) guesses.push_back(detail::mixture(beads[lo], beads[k], 0.5));
  if (hi != k) guesses.push_back(detail::mixture(beads[k], beads[hi], 0.5));
  if (lo != k) guesses.push_back(beads[lo]);
  if (hi != k) guesses.push_back(beads[hi]);
  std::optional<SaddleResult> found;
  for (const GridDensity& guess : guesses) {
    SaddleResult s = saddle_refine(model, guess, opt.saddle);
    if (acceptable(s)) {
      found = std::move(s);
      break;
    }
  }
  if (!found) {
    SaddleResult s = saddle_refine(model, beads[k], opt.saddle, &tangent);
    if (acceptable(s)) found = std::move(s);
  }
  const bool accepted = found.has_value();
  if (accepted) {
    rep.c = free_energy(model, found->density);
    rep.saddle = found->density;
    rep.saddle_residual = found->residual;
    rep.saddle_dissipation = found->dissipation;
    rep.converged = true;
  } else {
    rep.c = rep.string_barrier;
    rep.saddle = beads[k];
    rep.saddle_residual = fixed_point_residual(model, beads[k]);
    rep.saddle_dissipation = dissipation(model, beads[k]);
  }
  rep.delta = rep.c - rep.endpoint_energy_a;
  rep.saddle_tv_a = tv_distance(*rep.saddle, mu_a);
  rep.saddle_tv_b = tv_distance(*rep.saddle, mu_b);
  rep.distinct = rep.saddle_tv_a > kDistinctTv && rep.saddle_tv_b > kDistinctTv;
  return rep;
}

}  // namespace mckv
