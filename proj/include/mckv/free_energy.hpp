#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "mckv/torus/grid.hpp"
#include "mckv/torus/spectral.hpp"

namespace mckv {

/// Densities below this value are rejected wherever log ρ is needed.
inline constexpr double kPositivityFloor = 1e-300;

/// Inverse temperature, interaction potential and everything derived from W.
/// Immutable; copies share the cached spectral data.
class FreeEnergyModel {
 public:
  FreeEnergyModel(double beta, GridFunction potential) : beta_(beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive");
    check_even(potential);
    auto shared = std::make_shared<Shared>(Shared{potential, fourier_coefficients(potential),
                                                  ConvolutionKernel(potential), 0.0, true});
    shared->lambda = convexity_bound(shared->w_hat);
    shared->is_zero = std::all_of(potential.values().begin(), potential.values().end(),
                                  [](double v) { return v == 0.0; });
    shared_ = std::move(shared);
  }

  double beta() const noexcept { return beta_; }
  const GridFunction& potential() const noexcept { return shared_->w; }
  const FourierCoeffs& potential_coefficients() const noexcept { return shared_->w_hat; }
  const ConvolutionKernel& kernel() const noexcept { return shared_->kernel; }
  const TorusGrid& grid() const noexcept { return shared_->w.grid(); }
  /// Certified lower bound on the geodesic convexity modulus (≤ 0).
  double lambda() const noexcept { return shared_->lambda; }
  bool potential_is_zero() const noexcept { return shared_->is_zero; }

  FreeEnergyModel with_beta(double beta) const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be positive");
    FreeEnergyModel m(*this);
    m.beta_ = beta;
    return m;
  }

  void convolve(std::span<const double> rho, std::span<double> out) const { shared_->kernel.apply(rho, out); }
  GridFunction convolve(const GridDensity& mu) const { return shared_->kernel.apply(mu); }

 private:
  struct Shared {
    GridFunction w;
    FourierCoeffs w_hat;
    ConvolutionKernel kernel;
    double lambda;
    bool is_zero;
  };

  static void check_even(const GridFunction& w) {
    const TorusGrid& g = w.grid();
    double scale = 1.0;
    for (double v : w.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (std::abs(w[i] - w[g.reflected(i)]) > 1e-10 * scale) {
        throw InvalidArgument("interaction potential must be even under x -> -x");
      }
    }
  }

  // λ = -Σ_k (2π|k|/L)^2 |Ŵ(k)| L^{-d/2}, an upper estimate of ‖D²W‖_∞.
  static double convexity_bound(const FourierCoeffs& w_hat) {
    const TorusGrid& g = w_hat.grid();
    const double w0 = 2.0 * std::numbers::pi / g.length();
    const double norm = std::pow(g.length(), -0.5 * g.dim());
    double s = 0.0;
    for (std::size_t i = 0; i < w_hat.size(); ++i) {
      const Wavevector k = w_hat.wavevector(i);
      const double k2 = double(k[0]) * k[0] + double(k[1]) * k[1];
      s += w0 * w0 * k2 * std::abs(w_hat[i]) * norm;
    }
    return -s;
  }

  double beta_;
  std::shared_ptr<const Shared> shared_;
};

inline void require_positive(std::span<const double> rho) {
  const double m = *std::min_element(rho.begin(), rho.end());
  if (!(m >= kPositivityFloor)) throw PositivityFloor(m);
}

/// ∫ ρ log ρ with 0 log 0 = 0.
inline double entropy(const GridDensity& mu) {
  double s = 0.0;
  for (double r : mu.values()) {
    if (r > 0.0) s += r * std::log(r);
  }
  return s * mu.grid().cell_volume();
}

namespace detail {

inline double entropy_of(std::span<const double> rho, double cell_volume) {
  double s = 0.0;
  for (double r : rho)
    if (r > 0.0) s += r * std::log(r);
  return s * cell_volume;
}

inline double pairing(std::span<const double> a, std::span<const double> b, double cell_volume) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * cell_volume;
}

/// I(ρ) given the precomputed field W⋆ρ.
inline double free_energy_of(const FreeEnergyModel& model, std::span<const double> rho,
                             std::span<const double> field) {
  const double vol = model.grid().cell_volume();
  return entropy_of(rho, vol) / model.beta() + 0.5 * pairing(field, rho, vol);
}

/// Logarithmic mean (a-b)/(log a - log b), continuous at a = b.
inline double log_mean(double a, double b) {
  const double u = std::log(b / a);
  if (std::abs(u) < 1e-3) {
    return a * (1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0))));
  }
  return (b - a) / u;
}

/// ξ = β⁻¹ log ρ + W⋆ρ.
inline void chemical_potential(double beta, std::span<const double> rho, std::span<const double> field,
                               std::span<double> xi) {
  for (std::size_t i = 0; i < rho.size(); ++i) xi[i] = std::log(rho[i]) / beta + field[i];
}

/// Calls visit(i, j) for every interior face between cells i and j = i + e_axis.
template <class Visit>
void for_each_face(const TorusGrid& g, Visit&& visit) {
  const int n = g.cells_per_dim();
  if (g.dim() == 1) {
    for (int j = 0; j < n; ++j) visit(g.index(j), g.index(j + 1));
    return;
  }
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy) {
      visit(g.index(ix, iy), g.index(ix + 1, iy));
      visit(g.index(ix, iy), g.index(ix, iy + 1));
    }
}

/// Σ_faces M_{face} ((ξ_j - ξ_i)/h)^2 h^d with logarithmic-mean mobility.
inline double face_dissipation(const TorusGrid& g, std::span<const double> rho, std::span<const double> xi) {
  const double h = g.spacing();
  double s = 0.0;
  for_each_face(g, [&](std::size_t i, std::size_t j) {
    const double grad = (xi[j] - xi[i]) / h;
    s += log_mean(rho[i], rho[j]) * grad * grad;
  });
  return s * g.cell_volume();
}

}  // namespace detail

/// ½ ∬ W(x-y) dμ(y) dμ(x).
inline double interaction_energy(const GridDensity& mu, const FreeEnergyModel& model) {
  require_same_grid(mu.grid(), model.grid());
  const GridFunction field = model.convolve(mu);
  return 0.5 * detail::pairing(field.values(), mu.values(), mu.grid().cell_volume());
}

/// I(μ) = β⁻¹ ∫ ρ log ρ + ½ ∬ W(x-y) dμ dμ.
inline double free_energy(const FreeEnergyModel& model, const GridDensity& mu) {
  require_same_grid(mu.grid(), model.grid());
  const GridFunction field = model.convolve(mu);
  return detail::free_energy_of(model, mu.values(), field.values());
}

/// δI/δμ = β⁻¹ log ρ + W⋆μ.
inline GridFunction first_variation(const FreeEnergyModel& model, const GridDensity& mu) {
  require_same_grid(mu.grid(), model.grid());
  require_positive(mu.values());
  const GridFunction field = model.convolve(mu);
  std::vector<double> xi(mu.size());
  detail::chemical_potential(model.beta(), mu.values(), field.values(), xi);
  return GridFunction(mu.grid(), std::move(xi));
}

/// Discrete ∫|∇ξ|² dμ, measured on cell faces with the flow scheme's mobility.
inline double dissipation(const FreeEnergyModel& model, const GridDensity& mu) {
  const GridFunction xi = first_variation(model, mu);
  return detail::face_dissipation(mu.grid(), mu.values(), xi.values());
}

}  // namespace mckv
