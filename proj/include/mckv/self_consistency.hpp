#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "mckv/free_energy.hpp"
#include "mckv/parallel.hpp"
#include "mckv/torus/spectral.hpp"

namespace mckv {

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 50'000;
  double damping = 0.5;
};

/// One solved point of a β-continuation.
struct BranchPoint {
  double beta = 0.0;
  GridDensity density;
  double residual = 0.0;
  double order_parameter = 0.0;
  double free_energy_gap = 0.0;
  double tv_distance = 0.0;
  int iterations = 0;
  bool converged = true;
  /// Set on the first point (walking down in β) where a non-uniform branch has collapsed onto μ^L.
  bool fold = false;
};

namespace detail {

/// out = F(ρ) = exp(-β W⋆ρ)/Z. `field` receives W⋆ρ.
inline void kirkwood_into(const FreeEnergyModel& model, std::span<const double> rho, std::span<double> field,
                          std::span<double> out) {
  model.convolve(rho, field);
  const double beta = model.beta();
  double lo = field[0], hi = field[0];
  for (double v : field) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // exponent -β(field - lo) ranges over [-β(hi - lo), 0]
  const double range = beta * (hi - lo);
  if (range > 700.0) throw OverflowGuard(range);
  double mass = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    out[i] = std::exp(-beta * (field[i] - lo));
    mass += out[i];
  }
  mass *= model.grid().cell_volume();
  for (double& v : out) v /= mass;
}

/// Exact renormalisation so GridDensity's 1e-12 mass check always passes.
inline GridDensity renormalized(const TorusGrid& g, std::vector<double> v) {
  for (double& x : v) x = std::max(x, 0.0);
  return GridDensity::normalized(g, std::move(v));
}

}  // namespace detail

/// F(μ) = exp(-β W⋆μ) / ∫ exp(-β W⋆μ).
inline GridDensity kirkwood_monroe_map(const FreeEnergyModel& model, const GridDensity& mu) {
  require_same_grid(model.grid(), mu.grid());
  std::vector<double> field(mu.size()), out(mu.size());
  detail::kirkwood_into(model, mu.values(), field, out);
  return detail::renormalized(mu.grid(), std::move(out));
}

/// ‖μ - F(μ)‖_∞.
inline double fixed_point_residual(const FreeEnergyModel& model, const GridDensity& mu) {
  require_same_grid(model.grid(), mu.grid());
  std::vector<double> field(mu.size()), out(mu.size());
  detail::kirkwood_into(model, mu.values(), field, out);
  return sup_distance(mu.values(), out);
}

/// Nonzero wavevector minimising Ŵ(k); ties go to the smallest |k| and then to +k.
inline std::optional<Wavevector> dominant_mode(const FourierCoeffs& w_hat) {
  const TorusGrid& g = w_hat.grid();
  std::optional<Wavevector> best;
  double best_value = 0.0;
  for (const Wavevector& k : wavevectors_within(g, g.cells_per_dim())) {
    const double v = w_hat.at(k).real();
    if (!best || v < best_value - 1e-12) {
      best = k;
      best_value = v;
    }
  }
  return best;
}

/// L^{d/2} |μ̂(k)| = |∫ exp(2πi k·x/L) dμ|.
inline double order_parameter(const GridDensity& mu, const Wavevector& k) {
  const TorusGrid& g = mu.grid();
  const int n = g.cells_per_dim();
  const double w0 = 2.0 * std::numbers::pi / g.length();
  Complex s{};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double x = g.center(g.dim() == 1 ? static_cast<int>(i) : static_cast<int>(i / n));
    const double y = g.dim() == 1 ? 0.0 : g.center(static_cast<int>(i % n));
    const double phase = w0 * (k[0] * x + k[1] * y);
    s += mu[i] * Complex(std::cos(phase), std::sin(phase));
  }
  return std::abs(s) * g.cell_volume();
}

/// Mode used for BranchPoint::order_parameter: the dominant attractive mode, else k = e_1.
inline Wavevector order_mode(const FreeEnergyModel& model) {
  const auto k = dominant_mode(model.potential_coefficients());
  if (k && model.potential_coefficients().at(*k).real() < -1e-12) return *k;
  return {1, 0};
}

inline BranchPoint make_branch_point(const FreeEnergyModel& model, GridDensity mu, double residual, int iterations,
                                     bool converged) {
  const GridDensity uniform = GridDensity::uniform(mu.grid());
  BranchPoint p{model.beta(), mu, residual, 0.0, 0.0, 0.0, iterations, converged, false};
  p.order_parameter = order_parameter(mu, order_mode(model));
  p.free_energy_gap = free_energy(model, mu) - free_energy(model, uniform);
  p.tv_distance = tv_distance(mu, uniform);
  return p;
}

namespace detail {

struct PicardResult {
  std::vector<double> rho;
  double residual;
  int iterations;
  bool converged;
};

inline PicardResult picard(const FreeEnergyModel& model, std::vector<double> rho, const SolverOptions& opt) {
  if (!(opt.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw InvalidArgument("damping must lie in (0, 1]");
  const std::size_t size = rho.size();
  std::vector<double> field(size), f(size);
  double residual = 0.0;
  for (int it = 0;; ++it) {
    kirkwood_into(model, rho, field, f);
    residual = sup_distance(rho, f);
    if (residual <= opt.tol) return {std::move(rho), residual, it, true};
    if (it == opt.max_iter) return {std::move(rho), residual, it, false};
    for (std::size_t i = 0; i < size; ++i) rho[i] = (1.0 - opt.damping) * rho[i] + opt.damping * f[i];
  }
}

}  // namespace detail

/// Damped Picard iteration μ ← (1-θ)μ + θF(μ) until ‖μ - F(μ)‖_∞ ≤ tol.
inline BranchPoint fixed_point(const FreeEnergyModel& model, const GridDensity& mu0, const SolverOptions& opt = {}) {
  require_same_grid(model.grid(), mu0.grid());
  auto r = detail::picard(model, mu0.vector(), opt);
  if (!r.converged) throw NonConvergence(r.residual, r.iterations);
  return make_branch_point(model, detail::renormalized(mu0.grid(), std::move(r.rho)), r.residual, r.iterations, true);
}

namespace detail {

/// Dense matrix of the convolution operator η ↦ W⋆η (circulant, built from one column per cell).
inline Eigen::MatrixXd convolution_matrix(const FreeEnergyModel& model) {
  const std::size_t n = model.grid().size();
  Eigen::MatrixXd k(n, n);
  std::vector<double> e(n, 0.0), col(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    model.convolve(e, col);
    for (std::size_t i = 0; i < n; ++i) k(i, j) = col[i];
    e[j] = 0.0;
  }
  return k;
}

}  // namespace detail

/// Newton's method for T(μ) = μ - F(μ) = 0 on densities symmetric under x ↦ -x (d = 1).
/// The symmetry removes the translation zero mode, so saddles are as reachable as minima.
/// Returns the iterate and flags convergence instead of throwing.
inline BranchPoint newton_fixed_point(const FreeEnergyModel& model, const GridDensity& mu0, double tol = 1e-10,
                                      int max_iter = 50) {
  const TorusGrid& g = model.grid();
  require_same_grid(g, mu0.grid());
  if (g.dim() != 1) throw DimensionUnsupported(g.dim());
  const int n = static_cast<int>(g.size());
  const int half = n / 2;
  const double h = g.cell_volume();
  const Eigen::MatrixXd kmat = detail::convolution_matrix(model);

  std::vector<double> rho(n), field(n), f(n);
  for (int j = 0; j < n; ++j) rho[j] = 0.5 * (mu0[j] + mu0[n - 1 - j]);
  double residual = 0.0;
  int it = 0;
  for (;; ++it) {
    detail::kirkwood_into(model, rho, field, f);
    residual = sup_distance(rho, f);
    if (residual <= tol || it == max_iter) break;

    const Eigen::Map<const Eigen::VectorXd> fv(f.data(), n);
    const Eigen::RowVectorXd fk = h * (fv.transpose() * kmat);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
    jac.noalias() += model.beta() * fv.asDiagonal() * (kmat.rowwise() - fk);
    Eigen::MatrixXd red(half, half);
    Eigen::VectorXd rhs(half);
    for (int i = 0; i < half; ++i) {
      for (int l = 0; l < half; ++l) red(i, l) = jac(i, l) + jac(i, n - 1 - l);
      rhs(i) = f[i] - rho[i];
    }
    const Eigen::VectorXd step = red.partialPivLu().solve(rhs);
    if (!step.allFinite()) break;
    // Backtrack until the residual decreases and the iterate stays positive.
    std::vector<double> trial(n);
    bool accepted = false;
    for (double alpha = 1.0; alpha > 1e-6; alpha *= 0.5) {
      bool positive = true;
      for (int l = 0; l < half; ++l) {
        trial[l] = rho[l] + alpha * step(l);
        trial[n - 1 - l] = trial[l];
        positive = positive && trial[l] > 0.0;
      }
      if (!positive) continue;
      detail::kirkwood_into(model, trial, field, f);
      if (sup_distance(trial, f) < residual) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    rho.swap(trial);
  }
  const bool ok = residual <= tol;
  for (double& v : rho) v = std::max(v, kPositivityFloor);
  return make_branch_point(model, detail::renormalized(g, std::move(rho)), residual, it, ok);
}

/// Damped Picard, with a symmetric Newton polish in d = 1 when Picard stalls (critical slowing down).
inline BranchPoint solve_stationary(const FreeEnergyModel& model, const GridDensity& mu0, const SolverOptions& opt = {}) {
  require_same_grid(model.grid(), mu0.grid());
  auto r = detail::picard(model, mu0.vector(), opt);
  if (r.converged) {
    return make_branch_point(model, detail::renormalized(mu0.grid(), std::move(r.rho)), r.residual, r.iterations, true);
  }
  if (model.grid().dim() == 1) {
    // Near a degenerate bifurcation Picard crawls along the centre manifold, where a monotone
    // Newton line search also stalls; starting Newton from the warm start usually gets through.
    for (const GridDensity& start : {mu0, detail::renormalized(model.grid(), r.rho)}) {
      BranchPoint polished = newton_fixed_point(model, start, opt.tol);
      if (polished.converged) {
        polished.iterations += r.iterations;
        return polished;
      }
    }
  }
  throw NonConvergence(r.residual, r.iterations);
}

/// Mode-wise stability indicator of μ^L: s_k = 1 - β L^{-d/2} |Ŵ(k)| where Ŵ(k) < 0, else 1.
struct ModeStability {
  Wavevector k;
  double s;
};

inline std::vector<ModeStability> linear_stability(const FreeEnergyModel& model, int cutoff = 16) {
  const TorusGrid& g = model.grid();
  const double norm = std::pow(g.length(), -0.5 * g.dim());
  std::vector<ModeStability> out;
  for (const Wavevector& k : wavevectors_within(g, cutoff)) {
    const double w = model.potential_coefficients().at(k).real();
    double sk = 1.0;
    if (w < 0.0) {
      const double a = model.beta() * norm * std::abs(w);
      sk = 1.0 - a;
      if (std::abs(sk) <= 1e-14 * (1.0 + a)) sk = 0.0;  // marginal to rounding
    }
    out.push_back({k, sk});
  }
  return out;
}

inline bool uniform_is_unstable(const std::vector<ModeStability>& s) {
  return std::any_of(s.begin(), s.end(), [](const ModeStability& m) { return m.s < 0.0; });
}

/// TV distance below which a converged state is treated as μ^L. A point converged to residual tol
/// sits about tol/|s_k| from μ^L, which near criticality is far above roundoff.
inline constexpr double kUniformTv = 1e-4;

struct ContinuationOptions {
  SolverOptions solver{};
  /// Solve every β independently from a concentrated seed instead of warm-starting.
  bool cold_start = false;
  unsigned threads = 1;
  double seed_amplitude = 0.1;
  double cold_concentration = 4.0;
};

namespace detail {

inline GridDensity cosine_seed(const TorusGrid& g, const Wavevector& k, double amplitude, bool exponential) {
  const double w0 = 2.0 * std::numbers::pi / g.length();
  const auto profile = [&](double c) { return exponential ? std::exp(amplitude * c) : 1.0 + amplitude * c; };
  if (g.dim() == 1) {
    return GridDensity::normalized(g, GridFunction::sample(g, [&](double x) { return profile(std::cos(w0 * k[0] * x)); }).vector());
  }
  return GridDensity::normalized(
      g, GridFunction::sample(g, [&](double x, double y) { return profile(std::cos(w0 * (k[0] * x + k[1] * y))); })
             .vector());
}

inline BranchPoint unconverged_point(const FreeEnergyModel& model, const GridDensity& mu, const NonConvergence& e) {
  return make_branch_point(model, mu, e.last_residual(), static_cast<int>(e.iterations()), false);
}

}  // namespace detail

/// Uniform perturbed by amplitude·cos(2πk·x/L), the symmetry-breaking seed pinned at x = 0.
inline GridDensity seeded_uniform(const TorusGrid& g, const Wavevector& k, double amplitude = 0.1) {
  return detail::cosine_seed(g, k, amplitude, false);
}

/// Stationary states along beta_grid (increasing). Warm-started continuation walks the grid from
/// the top down, seeded at the largest β, so a clustered branch is followed until it folds onto μ^L.
/// Points that fail to converge are recorded with converged = false.
inline std::vector<BranchPoint> branch_continuation(const FreeEnergyModel& model, const std::vector<double>& beta_grid,
                                                    const Wavevector& seed_mode,
                                                    const ContinuationOptions& opt = {}) {
  if (beta_grid.empty()) throw InvalidArgument("beta grid is empty");
  for (std::size_t i = 1; i < beta_grid.size(); ++i)
    if (!(beta_grid[i] > beta_grid[i - 1])) throw InvalidArgument("beta grid must be strictly increasing");
  const TorusGrid& g = model.grid();
  std::vector<std::optional<BranchPoint>> points(beta_grid.size());

  const auto solve = [&](std::size_t i, const GridDensity& start) {
    const FreeEnergyModel m = model.with_beta(beta_grid[i]);
    try {
      points[i] = solve_stationary(m, start, opt.solver);
    } catch (const NonConvergence& e) {
      points[i] = detail::unconverged_point(m, start, e);
    }
  };

  if (opt.cold_start) {
    const GridDensity seed = detail::cosine_seed(g, seed_mode, opt.cold_concentration, true);
    parallel_for(beta_grid.size(), opt.threads, [&](std::size_t i) { solve(i, seed); });
  } else {
    GridDensity warm = seeded_uniform(g, seed_mode, opt.seed_amplitude);
    for (std::size_t r = beta_grid.size(); r-- > 0;) {
      solve(r, warm);
      if (points[r]->converged) warm = points[r]->density;
    }
  }

  std::vector<BranchPoint> out;
  out.reserve(points.size());
  for (auto& p : points) out.push_back(std::move(*p));
  for (std::size_t r = out.size() - 1; r-- > 0;) {
    if (out[r].tv_distance <= kUniformTv && out[r + 1].tv_distance > kUniformTv) {
      out[r].fold = true;
      break;
    }
  }
  return out;
}

}  // namespace mckv
