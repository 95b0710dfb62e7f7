#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mckv/gradient_flow.hpp"
#include "mckv/potentials.hpp"

using namespace mckv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using std::numbers::pi;

namespace {

GridDensity cosine_bump(const TorusGrid& g, int k, double a) {
  return GridDensity::normalized(
      g, GridFunction::sample(g, [&](double x) { return 1.0 + a * std::cos(2 * pi * k * x / g.length()); }).vector());
}

double amplitude(const GridDensity& mu, int k) { return order_parameter(mu, {k, 0}); }

/// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("flow_step basics", "[gradient_flow]") {
  const TorusGrid g(2 * pi, 1, 128);
  const FreeEnergyModel m(3.0, resonant_potential(g));
  const GridDensity u = GridDensity::uniform(g);
  CHECK(sup_distance(flow_step(m, u, default_time_step(m)).values(), u.values()) < 1e-15);
  CHECK_THROWS_AS(flow_step(m, u, 0.0), InvalidArgument);
  CHECK_THROWS_AS(flow_step(m, u, -1.0), InvalidArgument);
  // an absurd step overshoots into negative density
  CHECK_THROWS_AS(flow_step(m, cosine_bump(g, 3, 0.9), 10.0), StepRejected);

  const TorusGrid g2(1.0, 2, 32);
  const FreeEnergyModel m2(20.0, negative_cosine(g2));
  std::mt19937_64 rng(3);
  const GridDensity mu = test::random_smooth_density(g2, rng, 3, 1.0);
  const GridDensity next = flow_step(m2, mu, default_time_step(m2));
  CHECK_THAT(integrate(next.function()), WithinAbs(1.0, 1e-13));
  CHECK(free_energy(m2, next) <= free_energy(m2, mu));
  CHECK(sup_distance(flow_step(m2, GridDensity::uniform(g2), 1e-4).values(), GridDensity::uniform(g2).values()) < 1e-14);
}

TEST_CASE("heat flow single-mode decay", "[gradient_flow]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 256);
  const FreeEnergyModel m(1.5, GridFunction::constant(g, 0.0));
  for (int k : {1, 2, 5}) {
    const GridDensity mu = cosine_bump(g, k, 0.3);
    const double dt = default_time_step(m);
    const double rate = std::pow(2 * pi * k / L, 2) / m.beta();
    const GridDensity next = flow_step(m, mu, dt);
    const double ratio = amplitude(next, k) / amplitude(mu, k);
    // O(dt²) from Euler plus the O(h²) error of the three-point Laplacian
    CHECK(std::abs(ratio - std::exp(-rate * dt)) <= rate * rate * dt * dt + rate * dt * std::pow(pi * k / 256, 2));
  }
}

TEST_CASE("heat flow decay rate after Richardson extrapolation", "[gradient_flow]") {
  const double L = 1.0;
  const TorusGrid g(L, 1, 256);
  const FreeEnergyModel m(2.0, GridFunction::constant(g, 0.0));
  const double T = 0.01;
  for (int k : {1, 3}) {
    const GridDensity mu = cosine_bump(g, k, 0.4);
    const auto measured = [&](double dt) {
      const FlowTrajectory tr = evolve(m, mu, T, dt, 1'000'000);
      return -std::log(amplitude(tr.states.back(), k) / amplitude(mu, k)) / T;
    };
    const double dt = 8 * default_time_step(m);
    const double extrapolated = 2 * measured(dt / 2) - measured(dt);
    CHECK_THAT(extrapolated, WithinRel(std::pow(2 * pi * k / L, 2) / m.beta(), 0.01));
  }
}

TEST_CASE("linearised decay toward uniform below the transition", "[gradient_flow]") {
  const TorusGrid g(2 * pi, 1, 128);
  const FreeEnergyModel m(1.0, negative_cosine(g));
  const FlowTrajectory tr = evolve(m, cosine_bump(g, 1, 0.2), 12.0, 0.0, 200);
  std::vector<double> t, la;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    if (tr.times[i] < 4.0) continue;
    t.push_back(tr.times[i]);
    la.push_back(std::log(amplitude(tr.states[i], 1)));
  }
  // s₁ = 1 - β/2, rate β⁻¹(2π/L)² s₁ = 0.5
  CHECK_THAT(slope(t, la), WithinAbs(-0.5, 0.01));
  CHECK(tv_distance(tr.states.back(), GridDensity::uniform(g)) < 1e-3);
}

TEST_CASE("mass, positivity and energy decay over long runs", "[gradient_flow][property]") {
  const TorusGrid g(2 * pi, 1, 256);
  std::mt19937_64 rng(5);
  const std::vector<std::pair<FreeEnergyModel, GridDensity>> cases{
      {FreeEnergyModel(4.0, negative_cosine(g)), seeded_uniform(g, {1, 0})},
      {FreeEnergyModel(1.8, resonant_potential(g)), test::random_smooth_density(g, rng, 4, 2.0)},
      {FreeEnergyModel(0.7, GridFunction::constant(g, 0.0)), test::random_smooth_density(g, rng, 6, 3.0)}};
  for (const auto& [m, mu0] : cases) {
    const double dt = default_time_step(m);
    const FlowTrajectory tr = evolve(m, mu0, 10'000 * dt, dt, 1);
    REQUIRE(tr.states.size() == 10'001);
    double worst_mass = 0.0, worst_rise = -1.0, lowest = 1.0;
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
      worst_mass = std::max(worst_mass, std::abs(integrate(tr.states[i].function()) - 1.0));
      lowest = std::min(lowest, tr.states[i].min());
      if (i > 0) worst_rise = std::max(worst_rise, tr.energies[i] - tr.energies[i - 1]);
    }
    CHECK(worst_mass <= 1e-13);
    CHECK(lowest > 0.0);
    CHECK(worst_rise <= 1e-8);
    CHECK(tr.energies.back() < tr.energies.front());
    CHECK_THAT(tr.times.back(), WithinRel(10'000 * dt, 1e-12));
  }
}

TEST_CASE("discrete chain rule is first order in dt", "[gradient_flow]") {
  const TorusGrid g(2 * pi, 1, 128);
  const FreeEnergyModel m(3.0, resonant_potential(g));
  std::mt19937_64 rng(8);
  const GridDensity mu = test::random_smooth_density(g, rng, 3, 1.5);
  const double d0 = dissipation(m, mu), e0 = free_energy(m, mu);
  std::vector<double> ldt, lerr;
  for (double dt = default_time_step(m); dt > default_time_step(m) / 40; dt /= 2) {
    const double err = std::abs((free_energy(m, flow_step(m, mu, dt)) - e0) / dt + d0);
    ldt.push_back(std::log(dt));
    lerr.push_back(std::log(err));
  }
  CHECK_THAT(slope(ldt, lerr), WithinAbs(1.0, 0.1));
}

TEST_CASE("evolve trajectories", "[gradient_flow]") {
  const TorusGrid g(2 * pi, 1, 128);
  const FreeEnergyModel m(4.0, negative_cosine(g));
  const GridDensity u = GridDensity::uniform(g);
  const FlowTrajectory flat = evolve(m, u, 0.5, 0.0, 100);
  for (const GridDensity& s : flat.states) CHECK(sup_distance(s.values(), u.values()) < 1e-14);
  CHECK(flat.times.front() == 0.0);
  CHECK(flat.times.back() == 0.5);
  CHECK(flat.states.size() == flat.energies.size());
  CHECK(flat.states.size() == flat.dissipations.size());

  // a step larger than stable is halved until accepted
  const FlowTrajectory halved = evolve(m, cosine_bump(g, 20, 0.5), 5.0, 5.0, 1);
  CHECK(halved.times.back() == 5.0);
  CHECK(halved.times.size() > 2);
  for (std::size_t i = 1; i < halved.energies.size(); ++i) CHECK(halved.energies[i] <= halved.energies[i - 1] + 1e-8);

  const FlowTrajectory tr = evolve(m, seeded_uniform(g, {1, 0}), 80.0, 0.0, 5000);
  const BranchPoint fp = fixed_point(m, seeded_uniform(g, {1, 0}));
  CHECK(tv_distance(tr.states.back(), fp.density) <= 1e-4);
  // at the plateau successive energies differ only by summation roundoff
  for (std::size_t i = 1; i < tr.energies.size(); ++i) CHECK(tr.energies[i] <= tr.energies[i - 1] + 1e-13);
  CHECK_THROWS_AS(evolve(m, u, 0.0), InvalidArgument);
  CHECK_THROWS_AS(evolve(m, u, 1.0, 0.0, 0), InvalidArgument);
}

TEST_CASE("steady_state", "[gradient_flow]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 256);
  std::mt19937_64 rng(13);
  const SteadyState heat = steady_state(FreeEnergyModel(1.0, GridFunction::constant(g, 0.0)),
                                        test::random_smooth_density(g, rng), 1e-12);
  CHECK(tv_distance(heat.density, GridDensity::uniform(g)) < 1e-5);

  const FreeEnergyModel m(4.0, negative_cosine(g));
  const SteadyState s = steady_state(m, seeded_uniform(g, {1, 0}), 1e-12);
  CHECK(s.dissipation <= 1e-12);
  CHECK(s.residual < 1e-5);
  CHECK_THAT(order_parameter(s.density, {1, 0}), WithinAbs(test::bessel_order(4.0), 0.01));
  const BranchPoint fp = fixed_point(m, seeded_uniform(g, {1, 0}));
  CHECK(tv_distance(s.density, fp.density) <= 1e-4);

  const SteadyState again = steady_state(m, fp.density, 1e-12);
  CHECK(again.steps == 0);
  CHECK(again.density.vector() == fp.density.vector());

  SteadyStateOptions brief;
  brief.max_time = 0.01;
  try {
    steady_state(m, seeded_uniform(g, {1, 0}), 1e-12, brief);
    FAIL("expected a timeout");
  } catch (const SteadyStateTimeout& e) {
    CHECK(e.best().dissipation > 1e-12);
    CHECK(e.best().time <= 0.0101);
  }
  CHECK_THROWS_AS(steady_state(m, fp.density, 0.0), InvalidArgument);
}
