#pragma once

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include "mckv/torus/grid.hpp"

namespace mckv {

using Complex = std::complex<double>;

/// Integer wavevector; the second component is 0 in 1-D.
using Wavevector = std::array<int, 2>;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Plans are created once per (n, d, sign) and thread; only planning is serialised.
class FftPlanCache {
 public:
  ~FftPlanCache() {
    std::lock_guard lock(fftw_planner_mutex());
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n, int d, int sign) {
    const auto key = std::make_tuple(n, d, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::lock_guard lock(fftw_planner_mutex());
    const int total = d == 1 ? n : n * n;
    fftw_complex* in = fftw_alloc_complex(total);
    fftw_complex* out = fftw_alloc_complex(total);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = d == 1 ? fftw_plan_dft_1d(n, in, out, sign, flags)
                            : fftw_plan_dft_2d(n, n, in, out, sign, flags);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline FftPlanCache& plan_cache() {
  thread_local FftPlanCache cache;
  return cache;
}

/// Unnormalised DFT over the grid shape; sign = FFTW_FORWARD (e^{-2πi km/n}) or FFTW_BACKWARD.
inline void dft(const TorusGrid& grid, const Complex* in, Complex* out, int sign) {
  fftw_plan plan = plan_cache().get(grid.cells_per_dim(), grid.dim(), sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

inline std::vector<Complex>& scratch(int slot, std::size_t size) {
  thread_local std::array<std::vector<Complex>, 3> buffers;
  auto& b = buffers[slot];
  if (b.size() != size) b.assign(size, Complex{});
  return b;
}

inline int signed_wavenumber(int m, int n) noexcept { return m <= n / 2 ? m : m - n; }

}  // namespace detail

/// Coefficients f̂(k) = ∫ e_k f with e_k = L^{-d/2} exp(2πi k·x/L), for |k_i| <= n/2.
/// Stored in DFT index order; modes touching the Nyquist index are identically zero.
class FourierCoeffs {
 public:
  FourierCoeffs(TorusGrid grid, std::vector<Complex> coeffs) : grid_(std::move(grid)), c_(std::move(coeffs)) {
    if (c_.size() != grid_.size()) throw InvalidArgument("coefficient count must equal n^d");
  }

  const TorusGrid& grid() const noexcept { return grid_; }
  std::span<const Complex> raw() const noexcept { return c_; }
  std::size_t size() const noexcept { return c_.size(); }
  Complex operator[](std::size_t flat) const noexcept { return c_[flat]; }

  bool is_nyquist(std::size_t flat) const noexcept {
    const int n = grid_.cells_per_dim();
    if (grid_.dim() == 1) return static_cast<int>(flat) == n / 2;
    return static_cast<int>(flat / n) == n / 2 || static_cast<int>(flat % n) == n / 2;
  }

  Wavevector wavevector(std::size_t flat) const noexcept {
    const int n = grid_.cells_per_dim();
    if (grid_.dim() == 1) return {detail::signed_wavenumber(static_cast<int>(flat), n), 0};
    return {detail::signed_wavenumber(static_cast<int>(flat / n), n),
            detail::signed_wavenumber(static_cast<int>(flat % n), n)};
  }

  std::size_t flat_index(const Wavevector& k) const {
    const int n = grid_.cells_per_dim();
    const auto axis = [n](int kk) {
      if (std::abs(kk) > n / 2) throw InvalidArgument("wavevector outside |k_i| <= n/2");
      return kk < 0 ? kk + n : kk;
    };
    if (grid_.dim() == 1) return static_cast<std::size_t>(axis(k[0]));
    return static_cast<std::size_t>(axis(k[0])) * n + static_cast<std::size_t>(axis(k[1]));
  }

  Complex at(const Wavevector& k) const { return c_[flat_index(k)]; }
  Complex at(int k) const { return at(Wavevector{k, 0}); }

 private:
  TorusGrid grid_;
  std::vector<Complex> c_;
};

namespace detail {

// e^{+iπ(k1+k2)/n}: half-cell phase between cell-centre samples and the origin.
inline Complex centre_phase(const Wavevector& k, int n) {
  const double a = std::numbers::pi * (k[0] + k[1]) / n;
  return {std::cos(a), std::sin(a)};
}

}  // namespace detail

inline FourierCoeffs fourier_coefficients(const GridFunction& f) {
  const TorusGrid& g = f.grid();
  const std::size_t size = g.size();
  std::vector<Complex> in(size), out(size);
  for (std::size_t i = 0; i < size; ++i) in[i] = f[i];
  detail::dft(g, in.data(), out.data(), FFTW_BACKWARD);
  const double scale = std::pow(g.length(), -0.5 * g.dim()) * g.cell_volume();
  FourierCoeffs shape(g, std::vector<Complex>(size));
  for (std::size_t i = 0; i < size; ++i) {
    if (shape.is_nyquist(i)) {
      out[i] = 0.0;
      continue;
    }
    out[i] *= scale * detail::centre_phase(shape.wavevector(i), g.cells_per_dim());
  }
  return FourierCoeffs(g, std::move(out));
}

/// Evaluates Σ_k ĉ(k) e_{-k}(x) at cell centres; the imaginary part is discarded.
inline GridFunction synthesize(const FourierCoeffs& c, double* imag_residue = nullptr) {
  const TorusGrid& g = c.grid();
  const std::size_t size = g.size();
  std::vector<Complex> in(size), out(size);
  for (std::size_t i = 0; i < size; ++i) {
    in[i] = c[i] * std::conj(detail::centre_phase(c.wavevector(i), g.cells_per_dim()));
  }
  detail::dft(g, in.data(), out.data(), FFTW_FORWARD);
  const double scale = std::pow(g.length(), -0.5 * g.dim());
  std::vector<double> v(size);
  double imag = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    v[i] = scale * out[i].real();
    imag = std::max(imag, std::abs(scale * out[i].imag()));
  }
  if (imag_residue) *imag_residue = imag;
  return GridFunction(g, std::move(v));
}

/// Σ_k f̂(k) conj(ĝ(k)); equals ∫ f g for real band-limited inputs.
inline Complex spectral_inner(const FourierCoeffs& f, const FourierCoeffs& g) {
  require_same_grid(f.grid(), g.grid());
  Complex s{};
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * std::conj(g[i]);
  return s;
}

/// Nonzero wavevectors with |k_i| <= min(cutoff, n/2 - 1), ordered by |k|^2 and then
/// lexicographically descending, so +k precedes -k.
inline std::vector<Wavevector> wavevectors_within(const TorusGrid& g, int cutoff) {
  const int kmax = std::min(cutoff, g.cells_per_dim() / 2 - 1);
  std::vector<Wavevector> ks;
  const int ymax = g.dim() == 2 ? kmax : 0;
  for (int a = -kmax; a <= kmax; ++a)
    for (int b = -ymax; b <= ymax; ++b)
      if (a != 0 || b != 0) ks.push_back({a, b});
  std::sort(ks.begin(), ks.end(), [](const Wavevector& x, const Wavevector& y) {
    const int nx = x[0] * x[0] + x[1] * x[1];
    const int ny = y[0] * y[0] + y[1] * y[1];
    if (nx != ny) return nx < ny;
    return x > y;
  });
  return ks;
}

/// Cached Fourier multiplier of a fixed kernel W for repeated evaluation of W⋆μ.
class ConvolutionKernel {
 public:
  explicit ConvolutionKernel(const GridFunction& kernel) : grid_(kernel.grid()) {
    const FourierCoeffs w_hat = fourier_coefficients(kernel);
    const double scale = std::pow(grid_.length(), -0.5 * grid_.dim()) * grid_.cell_volume();
    multiplier_.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) multiplier_[i] = w_hat[i] * scale;
  }

  const TorusGrid& grid() const noexcept { return grid_; }

  /// out = W⋆ρ at cell centres for raw density values ρ.
  void apply(std::span<const double> density, std::span<double> out, double* imag_residue = nullptr) const {
    const std::size_t size = grid_.size();
    auto& a = detail::scratch(0, size);
    auto& b = detail::scratch(1, size);
    for (std::size_t i = 0; i < size; ++i) a[i] = density[i];
    detail::dft(grid_, a.data(), b.data(), FFTW_BACKWARD);
    for (std::size_t i = 0; i < size; ++i) b[i] *= multiplier_[i];
    detail::dft(grid_, b.data(), a.data(), FFTW_FORWARD);
    double imag = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      out[i] = a[i].real();
      imag = std::max(imag, std::abs(a[i].imag()));
    }
    if (imag_residue) *imag_residue = imag;
  }

  GridFunction apply(const GridDensity& mu, double* imag_residue = nullptr) const {
    require_same_grid(grid_, mu.grid());
    std::vector<double> out(grid_.size());
    apply(mu.values(), out, imag_residue);
    return GridFunction(grid_, std::move(out));
  }

 private:
  TorusGrid grid_;
  std::vector<Complex> multiplier_;
};

/// (W⋆μ)(x) = ∫ W(x-y) dμ(y), evaluated spectrally (exact for band-limited W).
inline GridFunction circular_convolution(const GridFunction& w, const GridDensity& mu,
                                         double* imag_residue = nullptr) {
  require_same_grid(w.grid(), mu.grid());
  return ConvolutionKernel(w).apply(mu, imag_residue);
}

/// Spectral gradient; one component per axis. The Nyquist mode is dropped.
inline std::vector<GridFunction> spectral_gradient(const GridFunction& f) {
  const TorusGrid& g = f.grid();
  const std::size_t size = g.size();
  std::vector<Complex> in(size), spec(size), work(size), out(size);
  for (std::size_t i = 0; i < size; ++i) in[i] = f[i];
  detail::dft(g, in.data(), spec.data(), FFTW_FORWARD);
  const FourierCoeffs shape(g, std::vector<Complex>(size));
  const double factor = 2.0 * std::numbers::pi / g.length();
  std::vector<GridFunction> grad;
  for (int axis = 0; axis < g.dim(); ++axis) {
    for (std::size_t i = 0; i < size; ++i) {
      const int k = shape.wavevector(i)[axis];
      work[i] = (shape.is_nyquist(i) ? Complex{} : spec[i] * Complex(0.0, factor * k)) / static_cast<double>(size);
    }
    detail::dft(g, work.data(), out.data(), FFTW_BACKWARD);
    std::vector<double> v(size);
    for (std::size_t i = 0; i < size; ++i) v[i] = out[i].real();
    grad.emplace_back(g, std::move(v));
  }
  return grad;
}

}  // namespace mckv
