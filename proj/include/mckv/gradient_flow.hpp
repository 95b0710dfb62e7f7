#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "mckv/free_energy.hpp"
#include "mckv/self_consistency.hpp"

namespace mckv {

/// Largest energy increase tolerated on an accepted step.
inline constexpr double kEnergyIncreaseTolerance = 1e-8;
inline constexpr double kMinTimeStep = 1e-12;

struct FlowTrajectory {
  std::vector<double> times;
  std::vector<GridDensity> states;
  std::vector<double> energies;
  std::vector<double> dissipations;
};

/// Diffusive CFL step 0.1 h² β.
inline double default_time_step(const FreeEnergyModel& model) {
  const double h = model.grid().spacing();
  return 0.1 * h * h * model.beta();
}

namespace detail {

/// out += scale · ∇_h·(ρ∇_h ξ): face fluxes M(ρ_i, ρ_j)(ξ_i - ξ_j)/h moved from cell i to j.
/// Each flux is added to one cell and subtracted from the other, so the total never changes.
inline void add_divergence(const TorusGrid& g, std::span<const double> rho, std::span<const double> xi, double scale,
                           std::span<double> out) {
  const double h = g.spacing();
  const double c = scale / (h * h);
  for_each_face(g, [&](std::size_t i, std::size_t j) {
    const double f = c * log_mean(rho[i], rho[j]) * (xi[i] - xi[j]);
    out[i] -= f;
    out[j] += f;
  });
}

/// Explicit finite-volume stepper for ∂_t ρ = ∇·(ρ∇ξ) with log-mean face mobilities.
/// Caches W⋆ρ and I(ρ) of the current state so each accepted step costs one convolution.
class FlowStepper {
 public:
  FlowStepper(const FreeEnergyModel& model, const GridDensity& mu)
      : model_(model), rho_(mu.vector()), field_(mu.size()), xi_(mu.size()), next_(mu.size()), next_field_(mu.size()) {
    require_same_grid(model.grid(), mu.grid());
    require_positive(rho_);
    model_.convolve(rho_, field_);
    energy_ = free_energy_of(model_, rho_, field_);
  }

  const std::vector<double>& rho() const noexcept { return rho_; }
  double energy() const noexcept { return energy_; }
  GridDensity density() const { return GridDensity(model_.grid(), rho_); }

  /// Dissipation of the current state (the same face sum the step uses).
  double dissipation() {
    chemical_potential(model_.beta(), rho_, field_, xi_);
    return face_dissipation(model_.grid(), rho_, xi_);
  }

  /// Attempts one Euler step; on success the state advances, otherwise it is left untouched.
  bool try_step(double dt) {
    chemical_potential(model_.beta(), rho_, field_, xi_);
    std::copy(rho_.begin(), rho_.end(), next_.begin());
    add_divergence(model_.grid(), rho_, xi_, dt, next_);
    for (double v : next_)
      if (!(v >= kPositivityFloor) || !std::isfinite(v)) return false;
    model_.convolve(next_, next_field_);
    const double e = free_energy_of(model_, next_, next_field_);
    if (!(e <= energy_ + kEnergyIncreaseTolerance)) return false;
    rho_.swap(next_);
    field_.swap(next_field_);
    energy_ = e;
    return true;
  }

 private:
  FreeEnergyModel model_;
  std::vector<double> rho_, field_, xi_, next_, next_field_;
  double energy_ = 0.0;
};

}  // namespace detail

/// One explicit finite-volume step of the McKean–Vlasov equation.
inline GridDensity flow_step(const FreeEnergyModel& model, const GridDensity& mu, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time step must be positive");
  detail::FlowStepper s(model, mu);
  if (!s.try_step(dt)) throw StepRejected("flow step lost positivity or increased the energy");
  return s.density();
}

/// Integrates to time T, halving dt whenever a step is rejected. Frames are kept every
/// `record_every` accepted steps, plus the initial and final states.
inline FlowTrajectory evolve(const FreeEnergyModel& model, const GridDensity& mu0, double T, double dt = 0.0,
                             int record_every = 1) {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("final time must be positive");
  if (record_every < 1) throw InvalidArgument("record_every must be at least 1");
  if (dt == 0.0) dt = default_time_step(model);
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");

  detail::FlowStepper s(model, mu0);
  FlowTrajectory traj;
  const auto record = [&](double t) {
    traj.times.push_back(t);
    traj.states.push_back(s.density());
    traj.energies.push_back(s.energy());
    traj.dissipations.push_back(s.dissipation());
  };
  record(0.0);
  double t = 0.0;
  long steps = 0;
  while (T - t > 1e-12 * T) {
    const double step = std::min(dt, T - t);
    if (!s.try_step(step)) {
      dt = 0.5 * step;
      if (dt < kMinTimeStep) throw DtUnderflow(dt);
      continue;
    }
    t = T - t <= step ? T : t + step;
    if (++steps % record_every == 0) record(t);
  }
  if (traj.times.back() != t) record(t);
  return traj;
}

struct SteadyStateOptions {
  double dt = 0.0;  // 0 selects default_time_step
  double max_time = 1e4;
};

struct SteadyState {
  GridDensity density;
  double dissipation = 0.0;
  double residual = 0.0;
  double time = 0.0;
  long steps = 0;
};

/// Raised by steady_state when the time budget runs out; carries the least-dissipative iterate.
class SteadyStateTimeout : public Timeout {
 public:
  explicit SteadyStateTimeout(SteadyState best)
      : Timeout("steady state not reached (dissipation " + std::to_string(best.dissipation) + ")"),
        best_(std::move(best)) {}
  const SteadyState& best() const noexcept { return best_; }

 private:
  SteadyState best_;
};

/// Right-hand side ∇·(μ∇ξ) of the flow equation in the scheme's finite-volume form.
inline GridFunction flow_divergence(const FreeEnergyModel& model, const GridDensity& mu) {
  const GridFunction xi = first_variation(model, mu);
  std::vector<double> out(mu.size(), 0.0);
  detail::add_divergence(mu.grid(), mu.values(), xi.values(), 1.0, out);
  return GridFunction(mu.grid(), std::move(out));
}

/// Runs the flow until the dissipation drops to tol.
inline SteadyState steady_state(const FreeEnergyModel& model, const GridDensity& mu0, double tol,
                                const SteadyStateOptions& opt = {}) {
  if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  double dt = opt.dt == 0.0 ? default_time_step(model) : opt.dt;
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");

  detail::FlowStepper s(model, mu0);
  const auto finish = [&](double d, double t, long steps) {
    GridDensity mu = s.density();
    const double res = fixed_point_residual(model, mu);
    return SteadyState{std::move(mu), d, res, t, steps};
  };
  double t = 0.0;
  long steps = 0;
  double d = s.dissipation();
  std::optional<SteadyState> best;
  double best_d = std::numeric_limits<double>::infinity();
  while (d > tol) {
    if (t >= opt.max_time) throw SteadyStateTimeout(best && best_d < d ? *best : finish(d, t, steps));
    if (!s.try_step(dt)) {
      dt *= 0.5;
      if (dt < kMinTimeStep) throw DtUnderflow(dt);
      continue;
    }
    t += dt;
    ++steps;
    d = s.dissipation();
    // snapshot only on a halving of the best dissipation, so copies stay rare
    if (d < 0.5 * best_d) {
      best_d = d;
      best = finish(d, t, steps);
    }
  }
  return finish(d, t, steps);
}

}  // namespace mckv
