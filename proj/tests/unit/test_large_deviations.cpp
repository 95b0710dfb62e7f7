#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mckv/large_deviations.hpp"
#include "mckv/potentials.hpp"

using namespace mckv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using std::numbers::pi;

namespace {

double periodic_gap(double a, double b, double L) {
  double d = std::fmod(std::abs(a - b), L);
  return std::min(d, L - d);
}

/// Mean squared single-particle displacement over [0, T] across replicas (N = 1).
double msd(const FreeEnergyModel& m, double T, double dt, std::size_t replicas, std::uint64_t seed) {
  double s = 0.0;
  for (std::size_t r = 0; r < replicas; ++r) {
    ParticleOptions opt;
    opt.replica = r;
    const auto traj = simulate_particles(m, 1, T, dt, seed, opt);
    const double d = periodic_gap(traj.front().positions[0], traj.back().positions[0], m.grid().length());
    s += d * d;
  }
  return s / double(replicas);
}

}  // namespace

TEST_CASE("weighted negative Sobolev norm", "[large_deviations]") {
  for (double L : {1.0, 2 * pi}) {
    const TorusGrid g(L, 1, 128);
    const GridDensity u = GridDensity::uniform(g);
    CHECK(weighted_hminus1(u, GridFunction::constant(g, 0.0)) == 0.0);
    const double a = 0.3;
    const GridFunction r = GridFunction::sample(g, [&](double x) { return a * std::cos(2 * pi * x / L); });
    CHECK_THAT(weighted_hminus1(u, r), WithinAbs(a * a * std::pow(L, 4) / (8 * pi * pi), 1e-10));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const GridFunction f = test::random_band_limited(g, rng, 6);
      const double mean = integrate(f) / L;
      std::vector<double> v(f.vector());
      for (double& x : v) x -= mean;
      const GridFunction z(g, v);
      CHECK_THAT(weighted_hminus1(u, z), WithinAbs(L * hminus1_norm_squared(z), 1e-10));
      CHECK(weighted_hminus1(test::random_smooth_density(g, rng), z) >= 0.0);
    }
    CHECK_THROWS_AS(weighted_hminus1(u, GridFunction::constant(g, 1.0)), NonZeroMean);
    std::vector<double> hole(g.size(), 1.0);
    hole[5] = 0.0;
    CHECK_THROWS_AS(weighted_hminus1(GridDensity::normalized(g, hole), r), PositivityFloor);
  }
}

TEST_CASE("path action", "[large_deviations]") {
  const TorusGrid g(2 * pi, 1, 128);
  const FreeEnergyModel m(4.0, negative_cosine(g));
  const BranchPoint fp = newton_fixed_point(m, seeded_uniform(g, {1, 0}, 0.5), 1e-14);
  REQUIRE(fp.converged);
  CHECK(path_action(m, std::vector<GridDensity>(5, fp.density), 0.1) <= 1e-10);
  CHECK(path_action(m, std::vector<GridDensity>(5, GridDensity::uniform(g)), 0.1) <= 1e-10);
  CHECK_THROWS_AS(path_action(m, std::vector<GridDensity>(2, fp.density), 0.1), InvalidArgument);

  // forward flow: S vanishes with the step
  const GridDensity start = seeded_uniform(g, {1, 0}, 0.3);
  const double T = 0.5;
  std::vector<double> ldt, ls;
  for (double dt = 4 * default_time_step(m); dt > default_time_step(m) / 3; dt /= 2) {
    const FlowTrajectory tr = evolve(m, start, T, dt, 1);
    const double s = path_action(m, tr.states, dt);
    CHECK(s >= 0.0);
    ldt.push_back(std::log(dt));
    ls.push_back(std::log(s));
  }
  CHECK(least_squares(ldt, ls).slope >= 0.9);

  // reversed flow: S recovers the energy climbed
  const double dt = default_time_step(m);
  const FlowTrajectory tr = evolve(m, start, 3.0, dt, 1);
  std::vector<GridDensity> rev(tr.states.rbegin(), tr.states.rend());
  const double climbed = free_energy(m, rev.back()) - free_energy(m, rev.front());
  REQUIRE(climbed > 0.0);
  CHECK_THAT(path_action(m, rev, dt), WithinRel(climbed, 0.05));
}

TEST_CASE("particle simulation", "[large_deviations][statistical]") {
  const TorusGrid g(2 * pi, 1, 128);
  const FreeEnergyModel m(2.0, resonant_potential(g));
  const auto traj = simulate_particles(m, 50, 0.1, 0.01, 99, ParticleOptions{3, 4});
  REQUIRE(traj.size() == 4);  // initial, steps 4 and 8, final step 10
  CHECK(traj.back().step == 10);
  CHECK(traj.back().replica == 3);
  CHECK(traj.back().master_seed == 99);
  for (const EnsembleState& s : traj)
    for (double x : s.positions) CHECK((x >= 0.0 && x < g.length()));
  const auto again = simulate_particles(m, 50, 0.1, 0.01, 99, ParticleOptions{3, 4});
  CHECK(again.back().positions == traj.back().positions);
  CHECK(simulate_particles(m, 50, 0.1, 0.01, 99, ParticleOptions{4, 0}).back().positions != traj.back().positions);

  // one particle: only ∇W(0) = 0 acts, so this is Brownian motion with variance 2t/β
  const double t = 0.01;
  const double exact = 2.0 * t / m.beta();
  CHECK_THAT(msd(m, t, t / 100, 10'000, 7), WithinRel(exact, 0.05));
  const double fine = msd(m, t, t / 100, 400'000, 11), coarse = msd(m, t, t / 50, 400'000, 12);
  CHECK(std::abs(coarse - fine) < 0.01 * fine);

  // independent Brownian particles spread to uniform
  const FreeEnergyModel free(1.0, GridFunction::constant(g, 0.0));
  const double L = g.length();
  const auto spread = simulate_particles(free, 10'000, L * L * free.beta(), L * L / 10, 5);
  const TorusGrid coarse_grid(L, 1, 16);
  CHECK(tv_distance(empirical_density(spread.back(), coarse_grid, 0), GridDensity::uniform(coarse_grid)) < 0.1);

  CHECK_THROWS_AS(simulate_particles(m, 0, 1.0, 0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(simulate_particles(m, 1, 1.0, 0.0, 1), InvalidArgument);

  const TorusGrid g2(1.0, 2, 16);
  const auto planar = simulate_particles(FreeEnergyModel(1.0, negative_cosine(g2)), 20, 0.05, 0.01, 2);
  CHECK(planar.back().size() == 20);
  CHECK_THAT(integrate(empirical_density(planar.back(), g2, 1).function()), WithinAbs(1.0, 1e-12));
}

TEST_CASE("empirical density", "[large_deviations]") {
  const TorusGrid g(2 * pi, 1, 32);
  EnsembleState one;
  one.positions = std::vector<double>(10, 3.5 * g.spacing());
  const GridDensity d = empirical_density(one, g, 0);
  CHECK_THAT(d[3], WithinRel(1.0 / g.cell_volume(), 1e-14));
  CHECK(d[2] == 0.0);
  const GridDensity s = empirical_density(one, g, 2);
  CHECK_THAT(s[3] / s[1], WithinRel(3.0, 1e-12));
  CHECK_THAT(integrate(s.function()), WithinAbs(1.0, 1e-12));
  CHECK_THROWS_AS(empirical_density(one, g, -1), InvalidArgument);

  // TV to uniform of i.i.d. uniform samples decays like N^{-1/2}
  const FreeEnergyModel free(1.0, GridFunction::constant(g, 0.0));
  std::vector<double> ln, ltv;
  for (std::size_t n = 100; n <= 25'600; n *= 4) {
    double tv = 0.0;
    for (std::uint64_t r = 0; r < 40; ++r)
      tv += tv_distance(empirical_density(simulate_particles(free, n, 0.0, 1.0, 17, {r, 0}).front(), g, 0),
                        GridDensity::uniform(g));
    ln.push_back(std::log(double(n)));
    ltv.push_back(std::log(tv / 40));
  }
  CHECK_THAT(least_squares(ln, ltv).slope, WithinAbs(-0.5, 0.1));
}

TEST_CASE("Wilson interval and least squares", "[large_deviations]") {
  const WilsonInterval zero = wilson_interval(0, 10);
  CHECK(zero.lo == 0.0);
  CHECK_THAT(zero.hi, WithinRel(kWilsonZ * kWilsonZ / (10 + kWilsonZ * kWilsonZ), 1e-12));
  const WilsonInterval half = wilson_interval(50, 100);
  CHECK_THAT(half.lo + half.hi, WithinAbs(1.0, 1e-12));
  CHECK_THAT(half.hi - half.lo, WithinAbs(2 * 0.0961, 2e-4));
  CHECK(wilson_interval(100, 100).hi == 1.0);
  CHECK_THROWS_AS(wilson_interval(0, 0), InvalidArgument);

  const LinearFit f = least_squares({1, 2, 3, 4}, {3, 5, 7, 9});
  CHECK_THAT(f.slope, WithinAbs(2.0, 1e-14));
  CHECK_THAT(f.intercept, WithinAbs(1.0, 1e-13));
  CHECK_THAT(f.r_squared, WithinAbs(1.0, 1e-14));
  CHECK(f.slope_stderr < 1e-14);
  CHECK_THROWS_AS(least_squares({1}, {1}), InvalidArgument);
}

TEST_CASE("escape probability", "[large_deviations]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 128), g16(L, 1, 16);
  const FreeEnergyModel m(0.5, resonant_potential(g));
  const GridDensity u16 = GridDensity::uniform(g16);
  const EscapeEstimate all = escape_probability(m, 8, 0.1, 0.01, L / 2, u16, 100, 1);
  CHECK(all.hits == 100);
  CHECK(all.p == 1.0);
  const EscapeEstimate none = escape_probability(m, 8, 0.1, 0.01, 0.0, u16, 100, 1);
  CHECK(none.hits == 0);
  CHECK(none.interval.hi > 0.0);

  const FreeEnergyModel cold(3.0, resonant_potential(g));
  const GridDensity target = coarsen(solve_stationary(cold, detail::cosine_seed(g, {1, 0}, 4.0, true)).density, g16);
  const EscapeEstimate small = escape_probability(m, 32, 0.2, 0.01, 0.3, target, 200, 4);
  const EscapeEstimate large = escape_probability(m, 32, 0.2, 0.01, 0.3, target, 800, 4);
  CHECK(small.p < 0.02);
  CHECK(large.interval.hi < small.interval.hi);

  EscapeOptions threaded;
  threaded.threads = 3;
  const EscapeEstimate a = escape_probability(m, 16, 0.2, 0.01, 1.0, target, 300, 9);
  const EscapeEstimate b = escape_probability(m, 16, 0.2, 0.01, 1.0, target, 300, 9, threaded);
  CHECK(a.hits == b.hits);
  CHECK(a.hits > 0);
  CHECK(a.hits < 300);

  CHECK_THROWS_AS(escape_probability(m, 8, 0.1, 0.01, 1.0, u16, 99, 1), InvalidArgument);
  const TorusGrid g2(L, 2, 8);
  CHECK_THROWS_AS(escape_probability(FreeEnergyModel(1.0, negative_cosine(g2)), 8, 0.1, 0.01, 1.0,
                                     GridDensity::uniform(g2), 100, 1),
                  DimensionUnsupported);
}

TEST_CASE("scaling study", "[large_deviations]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 256), g16(L, 1, 16);

  const FreeEnergyModel free(1.0, GridFunction::constant(g, 0.0));
  const ScalingStudy flat = scaling_study(free, {4, 8, 16}, 0.1, 0.01, L, GridDensity::uniform(g16), 100, 3, 0.0);
  CHECK(flat.fitted);
  CHECK(flat.fit_slope == 0.0);
  CHECK(flat.monotone);

  // small-barrier benchmark: amplitude 22.5 with β and time rescaled to match
  const double alpha = 22.5;
  const FreeEnergyModel m(1.7565 / alpha, resonant_potential(g, alpha));
  const GridDensity target = coarsen(solve_stationary(m, detail::cosine_seed(g, {1, 0}, 4.0, true)).density, g16);
  const ScalingStudy st =
      scaling_study(m, {8, 16, 32, 64}, 1 / alpha, 0.02 / alpha, 0.6, target, 2000, 20240611, 0.0486);
  CHECK(st.fitted);
  CHECK(st.fit_slope < 0.0);
  CHECK(st.monotone);
  CHECK(st.r_squared >= 0.9);
  CHECK(st.slope_check);
  CHECK_THAT(st.lambda_slack, WithinRel(112.5 * 0.36, 1e-9));

  // twice the replicas: interval half-widths shrink by about √2
  const EscapeEstimate e1 = escape_probability(m, 16, 1 / alpha, 0.02 / alpha, 0.6, target, 2000, 5);
  const EscapeEstimate e2 = escape_probability(m, 16, 1 / alpha, 0.02 / alpha, 0.6, target, 4000, 5);
  const double ratio = (e1.interval.hi - e1.interval.lo) / (e2.interval.hi - e2.interval.lo);
  CHECK_THAT(ratio, WithinRel(std::sqrt(2.0), 0.15));

  try {
    scaling_study(m, {8, 16, 32}, 1 / alpha, 0.02 / alpha, 0.0, target, 100, 1, 0.05);
    FAIL("expected InsufficientHits");
  } catch (const InsufficientHitsStudy& e) {
    CHECK(e.study().points.size() == 3);
    CHECK(e.study().points[0].censored);
    CHECK_FALSE(e.study().fitted);
  }
  CHECK_THROWS_AS(scaling_study(m, {16, 8}, 0.1, 0.01, 0.5, target, 100, 1, 0.05), InvalidArgument);
}
