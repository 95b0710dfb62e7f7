#include <catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "mckv/free_energy.hpp"
#include "mckv/potentials.hpp"

using namespace mckv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using std::numbers::pi;

namespace {

GridDensity cosine_density(const TorusGrid& g, double a) {
  const double L = g.length();
  return GridDensity::normalized(g, GridFunction::sample(g, [&](double x) { return (1 + a * std::cos(2 * pi * x / L)) / L; }).vector());
}

}  // namespace

TEST_CASE("entropy examples", "[free_energy]") {
  for (double L : {0.5, 1.0, 2 * pi}) {
    const TorusGrid g(L, 1, 64);
    CHECK_THAT(entropy(GridDensity::uniform(g)), WithinAbs(-std::log(L), 1e-12));
  }
  const TorusGrid g1(1.0, 1, 256);
  CHECK_THAT(entropy(cosine_density(g1, 1.0)), WithinAbs(1.0 - std::log(2.0), 1e-4));
  std::vector<double> spike(64, 0.0);
  spike[5] = 64.0;
  CHECK(std::isfinite(entropy(GridDensity(TorusGrid(1.0, 1, 64), spike))));
}

TEST_CASE("interaction and free energy examples", "[free_energy]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 128);
  const FreeEnergyModel zero(1.0, GridFunction::constant(g, 0.0));
  CHECK(interaction_energy(cosine_density(g, 0.7), zero) == 0.0);

  const GridFunction w = cosine_potential(g, {{1, -1.0}, {3, 0.4}});
  const FreeEnergyModel m(2.0, GridFunction(g, [&] {
                            auto v = w.vector();
                            for (double& x : v) x += 0.3;
                            return v;
                          }()));
  CHECK_THAT(interaction_energy(GridDensity::uniform(g), m), WithinAbs(0.5 * 0.3 * L / L, 1e-12));

  const FreeEnergyModel nc(2.0, negative_cosine(g));
  // W⋆μ = -½cos x, so ½∫(-½cos x)(1 + cos x)/L dx = -¼·(1/L)∫cos²x dx = -1/8.
  CHECK_THAT(interaction_energy(cosine_density(g, 1.0), nc), WithinAbs(-0.125, 1e-10));
  CHECK_THAT(free_energy(nc, GridDensity::uniform(g)), WithinAbs(-0.5 * std::log(2 * pi), 1e-12));
  CHECK_THAT(free_energy(nc, GridDensity::uniform(g)), WithinAbs(-0.91894, 1e-5));

  const TorusGrid g1(1.0, 1, 32);
  CHECK_THAT(free_energy(FreeEnergyModel(3.0, GridFunction::constant(g1, 0.0)), GridDensity::uniform(g1)),
             WithinAbs(0.0, 1e-15));
  const TorusGrid g3(3.0, 1, 32);
  CHECK_THAT(free_energy(FreeEnergyModel(0.7, negative_cosine(g3)), GridDensity::uniform(g3)),
             WithinAbs(-std::log(3.0) / 0.7, 1e-12));
}

TEST_CASE("first variation examples", "[free_energy]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 128);
  const FreeEnergyModel nc(2.0, negative_cosine(g));
  const GridFunction u = first_variation(nc, GridDensity::uniform(g));
  for (double v : u.values()) CHECK_THAT(v, WithinAbs(0.5 * std::log(1 / L), 1e-12));

  const GridDensity mu = cosine_density(g, 0.5);
  const GridFunction xi = first_variation(nc, mu);
  for (int j = 0; j < 128; ++j) {
    const double x = g.center(j);
    CHECK_THAT(xi[j], WithinAbs(0.5 * std::log(mu[j]) - 0.25 * std::cos(x), 1e-8));
  }

  const FreeEnergyModel heat(1.5, GridFunction::constant(g, 0.0));
  const GridFunction xh = first_variation(heat, mu);
  for (int j = 0; j < 128; ++j) CHECK_THAT(xh[j], WithinAbs(std::log(mu[j]) / 1.5, 1e-12));

  std::vector<double> gap(128, 1.0 / L);
  gap[3] = 0.0;
  gap[4] = 2.0 / L;
  CHECK_THROWS_AS(first_variation(nc, GridDensity(g, gap)), PositivityFloor);
  CHECK_THROWS_AS(dissipation(nc, GridDensity(g, gap)), PositivityFloor);
}

TEST_CASE("dissipation examples", "[free_energy]") {
  const double L = 2 * pi;
  const TorusGrid g(L, 1, 256);
  const FreeEnergyModel nc(2.0, negative_cosine(g));
  CHECK(dissipation(nc, GridDensity::uniform(g)) <= 1e-12);

  // W = 0, β = 1: ∫ ρ'^2/ρ for ρ = (1 + ½cos(2πx/L))/L, by fine quadrature of the analytic integrand.
  const FreeEnergyModel heat(1.0, GridFunction::constant(g, 0.0));
  const GridDensity mu = cosine_density(g, 0.5);
  double fisher = 0.0;
  const int fine = 1 << 16;
  for (int j = 0; j < fine; ++j) {
    const double x = (j + 0.5) * L / fine;
    const double rho = (1 + 0.5 * std::cos(2 * pi * x / L)) / L;
    const double drho = -0.5 * (2 * pi / L) * std::sin(2 * pi * x / L) / L;
    fisher += drho * drho / rho * L / fine;
  }
  const double d = dissipation(heat, mu);
  CHECK(d > 0.0);
  CHECK_THAT(d, WithinRel(fisher, 1e-3));
}

TEST_CASE("free energy properties", "[free_energy][property]") {
  std::mt19937_64 rng(21);
  for (int d : {1, 2}) {
    const TorusGrid g(1.9, d, d == 1 ? 64 : 16);
    const FreeEnergyModel m(1.3, cosine_potential(g, {{1, -1.0}, {2, 0.5}, {3, -0.25}}));
    for (int trial = 0; trial < 20; ++trial) {
      const GridDensity mu = test::random_smooth_density(g, rng, 4, 2.0);
      CHECK(free_energy(m, mu) == entropy(mu) / m.beta() + interaction_energy(mu, m));
      CHECK(entropy(mu) >= -d * std::log(g.length()) - 1e-12);
      const double e0 = interaction_energy(mu, m);
      for (int s : {1, 5, 13}) CHECK_THAT(interaction_energy(translate(mu, s, d == 2 ? 3 : 0), m), WithinAbs(e0, 1e-10));
      CHECK(dissipation(m, mu) >= 0.0);
    }
  }
}

TEST_CASE("model validation and convexity bound", "[free_energy]") {
  const TorusGrid g(2 * pi, 1, 64);
  CHECK_THROWS_AS(FreeEnergyModel(0.0, negative_cosine(g)), InvalidArgument);
  CHECK_THROWS_AS(FreeEnergyModel(1.0, GridFunction::sample(g, [](double x) { return std::sin(x); })), InvalidArgument);
  const FreeEnergyModel nc(1.0, negative_cosine(g));
  // Σ_{k=±1} (2π/L)^2 (√L/2) L^{-1/2} = 1 = ‖W''‖_∞
  CHECK_THAT(nc.lambda(), WithinAbs(-1.0, 1e-12));
  CHECK_THAT(FreeEnergyModel(1.0, resonant_potential(g)).lambda(), WithinAbs(-5.0, 1e-12));
  CHECK(nc.with_beta(3.0).beta() == 3.0);
  CHECK(nc.with_beta(3.0).lambda() == nc.lambda());
  CHECK_THROWS_AS(interaction_energy(GridDensity::uniform(TorusGrid(2 * pi, 1, 32)), nc), GridMismatch);
}
