#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "mckv/potentials.hpp"
#include "mckv/torus/io.hpp"
#include "mckv/torus/spectral.hpp"

using namespace mckv;
using Catch::Matchers::WithinAbs;
using std::numbers::pi;

TEST_CASE("grid construction and centres", "[torus]") {
  const TorusGrid g = build_grid(1.0, 1, 8);
  CHECK(g.size() == 8);
  CHECK_THAT(g.center(0), WithinAbs(1.0 / 16, 1e-15));
  CHECK_THAT(g.center(1), WithinAbs(3.0 / 16, 1e-15));
  CHECK(g.index(9) == g.index(1));
  CHECK(g.index(-1) == 7);
  CHECK_THAT(build_grid(2 * pi, 1, 256).cell_volume(), WithinAbs(2 * pi / 256, 1e-15));
  CHECK(build_grid(1.0, 2, 16).size() == 256);
  CHECK_THROWS_AS(build_grid(1.0, 3, 16), InvalidArgument);
  CHECK_THROWS_AS(build_grid(1.0, 1, 12), InvalidArgument);
  CHECK_THROWS_AS(build_grid(1.0, 1, 4), InvalidArgument);
  CHECK_THROWS_AS(build_grid(-1.0, 1, 16), InvalidArgument);
}

TEST_CASE("midpoint quadrature", "[torus]") {
  const TorusGrid g(3.0, 1, 64);
  CHECK_THAT(integrate(GridFunction::constant(g, 2.5)), WithinAbs(7.5, 1e-13));
  const auto c = GridFunction::sample(g, [](double x) { return std::cos(2 * pi * x / 3.0); });
  CHECK_THAT(integrate(c), WithinAbs(0.0, 1e-12));
  const TorusGrid g1(1.0, 1, 32);
  CHECK_THAT(integrate(GridFunction::sample(g1, [](double x) { return 1 + std::cos(2 * pi * x); })),
             WithinAbs(1.0, 1e-13));
}

TEST_CASE("density invariants", "[torus]") {
  const TorusGrid g(1.0, 1, 8);
  CHECK_THROWS_AS(GridDensity(g, std::vector<double>(8, 0.5)), InvalidArgument);
  std::vector<double> neg(8, 1.0);
  neg[3] = -1e-3;
  CHECK_THROWS_AS(GridDensity(g, neg), InvalidArgument);
  CHECK_THROWS_AS(GridFunction(g, std::vector<double>(7, 1.0)), InvalidArgument);
  CHECK_THROWS_AS(GridFunction(g, std::vector<double>(8, std::nan(""))), InvalidArgument);
}

TEST_CASE("Fourier coefficients of simple functions", "[torus][fourier]") {
  for (double L : {1.0, 2 * pi, 5.0}) {
    const TorusGrid g(L, 1, 64);
    const auto one = fourier_coefficients(GridFunction::constant(g, 3.0));
    CHECK_THAT(one.at(0).real(), WithinAbs(3.0 * std::sqrt(L), 1e-12));
    for (int k = 1; k < 32; ++k) CHECK(std::abs(one.at(k)) < 1e-12);

    const auto w = fourier_coefficients(negative_cosine(g));
    CHECK_THAT(w.at(1).real(), WithinAbs(-std::sqrt(L) / 2, 1e-12));
    CHECK_THAT(w.at(-1).real(), WithinAbs(-std::sqrt(L) / 2, 1e-12));
    CHECK(std::abs(w.at(1).imag()) < 1e-12);
    for (int k = 2; k < 32; ++k) CHECK(std::abs(w.at(k)) < 1e-12);
    CHECK(std::abs(w.at(0)) < 1e-12);

    const auto r = fourier_coefficients(resonant_potential(g));
    for (int k : {-2, -1, 1, 2}) CHECK_THAT(r.at(k).real(), WithinAbs(-std::sqrt(L) / 2, 1e-12));
    CHECK(std::abs(r.at(3)) < 1e-12);
  }
}

TEST_CASE("sine picks up the half-cell phase correctly", "[torus][fourier]") {
  const double L = 2.0;
  const TorusGrid g(L, 1, 32);
  const auto s = fourier_coefficients(GridFunction::sample(g, [&](double x) { return std::sin(2 * pi * x / L); }));
  // ∫ L^{-1/2} e^{2πix/L} sin(2πx/L) dx = i √L / 2
  CHECK_THAT(s.at(1).real(), WithinAbs(0.0, 1e-12));
  CHECK_THAT(s.at(1).imag(), WithinAbs(std::sqrt(L) / 2, 1e-12));
  CHECK_THAT(s.at(-1).imag(), WithinAbs(-std::sqrt(L) / 2, 1e-12));
}

TEST_CASE("conjugate symmetry and synthesis round-trip", "[torus][fourier][property]") {
  std::mt19937_64 rng(11);
  for (int d : {1, 2}) {
    const TorusGrid g(1.7, d, 32);
    for (int trial = 0; trial < 10; ++trial) {
      const GridFunction f = test::random_band_limited(g, rng);
      const FourierCoeffs c = fourier_coefficients(f);
      for (std::size_t i = 0; i < c.size(); ++i) {
        const Wavevector k = c.wavevector(i);
        if (c.is_nyquist(i)) continue;
        CHECK(std::abs(c[i] - std::conj(c.at(Wavevector{-k[0], -k[1]}))) < 1e-10);
      }
      double imag = 1.0;
      const GridFunction back = synthesize(c, &imag);
      CHECK(imag < 1e-12);
      CHECK(sup_distance(back.values(), f.values()) < 1e-11);
    }
  }
}

TEST_CASE("Parseval on band-limited data", "[torus][fourier][property]") {
  std::mt19937_64 rng(5);
  for (int d : {1, 2}) {
    const TorusGrid g(2.3, d, 32);
    for (int trial = 0; trial < 20; ++trial) {
      const GridFunction f = test::random_band_limited(g, rng);
      const GridFunction h = test::random_band_limited(g, rng);
      std::vector<double> prod(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) prod[i] = f[i] * h[i];
      const double lhs = integrate(g, prod);
      const Complex rhs = spectral_inner(fourier_coefficients(f), fourier_coefficients(h));
      CHECK_THAT(rhs.real(), WithinAbs(lhs, 1e-10 * std::max(1.0, std::abs(lhs))));
      CHECK(std::abs(rhs.imag()) < 1e-10);
    }
  }
}

TEST_CASE("circular convolution examples", "[torus][convolution]") {
  for (double L : {1.0, 2 * pi}) {
    const TorusGrid g(L, 1, 128);
    const GridFunction w = negative_cosine(g);
    const GridDensity mu = GridDensity::normalized(
        g, GridFunction::sample(g, [&](double x) { return (1 + std::cos(2 * pi * x / L)) / L; }).vector());
    double imag = 1.0;
    const GridFunction conv = circular_convolution(w, mu, &imag);
    CHECK(imag < 1e-12);
    for (int j = 0; j < 128; ++j) CHECK_THAT(conv[j], WithinAbs(-0.5 * std::cos(2 * pi * g.center(j) / L), 1e-10));

    const GridFunction uni = circular_convolution(resonant_potential(g), GridDensity::uniform(g));
    for (double v : uni.values()) CHECK_THAT(v, WithinAbs(integrate(resonant_potential(g)) / L, 1e-12));

    const GridFunction zero = circular_convolution(GridFunction::constant(g, 0.0), mu);
    for (double v : zero.values()) CHECK(v == 0.0);
  }
  const TorusGrid g1(1.0, 1, 16);
  const TorusGrid g2(1.0, 1, 32);
  CHECK_THROWS_AS(circular_convolution(GridFunction::constant(g1, 1.0), GridDensity::uniform(g2)), GridMismatch);
}

TEST_CASE("convolution matches direct quadrature and the convolution theorem", "[torus][convolution][property]") {
  std::mt19937_64 rng(7);
  for (int d : {1, 2}) {
    const TorusGrid g(1.3, d, d == 1 ? 64 : 16);
    for (int trial = 0; trial < 5; ++trial) {
      const GridFunction w = test::random_band_limited(g, rng, 3);
      const GridDensity mu = test::random_smooth_density(g, rng, 3);
      double imag = 1.0;
      const GridFunction conv = circular_convolution(w, mu, &imag);
      CHECK(imag < 1e-12);

      const auto wf = fourier_coefficients(w);
      const auto mf = fourier_coefficients(mu.function());
      const auto cf = fourier_coefficients(conv);
      const double scale = std::pow(g.length(), 0.5 * d);
      for (std::size_t i = 0; i < cf.size(); ++i) {
        CHECK(std::abs(cf[i] - scale * wf[i] * mf[i]) < 1e-10);
      }
    }
  }
}

TEST_CASE("convolution agrees with brute-force sum on the lattice", "[torus][convolution]") {
  // With W sampled on the lattice of differences, W⋆μ at centre x_i is Σ_j W(x_i - y_j) ρ_j h.
  std::mt19937_64 rng(3);
  const TorusGrid g(2.0, 1, 32);
  const double w0 = pi;
  const auto wfun = [&](double x) { return std::cos(w0 * x) - 0.3 * std::cos(3 * w0 * x) + 0.1; };
  const GridFunction w = GridFunction::sample(g, wfun);
  const GridDensity mu = test::random_smooth_density(g, rng, 3);
  const GridFunction conv = circular_convolution(w, mu);
  for (int i = 0; i < 32; ++i) {
    double s = 0.0;
    for (int j = 0; j < 32; ++j) s += wfun(g.center(i) - g.center(j)) * mu[j] * g.spacing();
    CHECK_THAT(conv[i], WithinAbs(s, 1e-12));
  }
}

TEST_CASE("spectral gradient", "[torus][gradient]") {
  const double L = 3.0;
  const TorusGrid g(L, 1, 64);
  const auto c = spectral_gradient(GridFunction::constant(g, 4.0));
  for (double v : c[0].values()) CHECK(std::abs(v) < 1e-12);
  const auto s = spectral_gradient(GridFunction::sample(g, [&](double x) { return std::sin(2 * pi * x / L); }));
  for (int j = 0; j < 64; ++j)
    CHECK_THAT(s[0][j], WithinAbs(2 * pi / L * std::cos(2 * pi * g.center(j) / L), 1e-10));
  const auto c2 = spectral_gradient(GridFunction::sample(g, [&](double x) { return std::cos(4 * pi * x / L); }));
  for (int j = 0; j < 64; ++j)
    CHECK_THAT(c2[0][j], WithinAbs(-4 * pi / L * std::sin(4 * pi * g.center(j) / L), 1e-10));

  const TorusGrid g2(L, 2, 16);
  const auto grad =
      spectral_gradient(GridFunction::sample(g2, [&](double x, double y) { return std::sin(2 * pi * (x + 2 * y) / L); }));
  REQUIRE(grad.size() == 2);
  for (int ix = 0; ix < 16; ++ix)
    for (int iy = 0; iy < 16; ++iy) {
      const double ph = 2 * pi * (g2.center(ix) + 2 * g2.center(iy)) / L;
      CHECK_THAT(grad[0][g2.index(ix, iy)], WithinAbs(2 * pi / L * std::cos(ph), 1e-10));
      CHECK_THAT(grad[1][g2.index(ix, iy)], WithinAbs(4 * pi / L * std::cos(ph), 1e-10));
    }
}

TEST_CASE("grid function CSV and binary round-trip", "[torus][io]") {
  std::mt19937_64 rng(1);
  for (int d : {1, 2}) {
    const TorusGrid g(2 * pi, d, 16);
    const GridFunction f = test::random_band_limited(g, rng);
    std::stringstream csv;
    write_csv(csv, f);
    const GridFunction back = read_csv(csv, 2 * pi);
    CHECK(back.grid() == g);
    CHECK(back.vector() == f.vector());

    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_binary(bin, f);
    const std::string bytes = bin.str();
    CHECK(bytes.substr(0, 11) == "MCKV-GRIDFN");
    CHECK(bytes.size() == 16 + 4 + 4 + 8 + 8 * g.size());
    const GridFunction back2 = read_binary(bin);
    CHECK(back2.grid() == g);
    CHECK(back2.vector() == f.vector());
  }
  std::stringstream bad("nonsense\n");
  CHECK_THROWS_AS(read_csv(bad, 1.0), InvalidArgument);
}
