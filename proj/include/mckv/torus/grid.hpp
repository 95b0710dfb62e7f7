#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mckv/error.hpp"

namespace mckv {

/// Uniform periodic grid on the flat torus [0,L)^d, d in {1,2}, with n cells per axis.
/// Cell j has centre (j+1/2)L/n. In 2-D the flat index is ix*n + iy.
class TorusGrid {
 public:
  TorusGrid(double length, int dim, int cells) : length_(length), dim_(dim), cells_(cells) {
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw InvalidArgument("torus side length must be positive and finite");
    }
    if (dim != 1 && dim != 2) {
      throw InvalidArgument("torus dimension must be 1 or 2");
    }
    if (cells < 8 || (cells & (cells - 1)) != 0) {
      throw InvalidArgument("cells per dimension must be a power of two >= 8");
    }
  }

  double length() const noexcept { return length_; }
  int dim() const noexcept { return dim_; }
  int cells_per_dim() const noexcept { return cells_; }
  std::size_t size() const noexcept {
    return dim_ == 1 ? static_cast<std::size_t>(cells_)
                     : static_cast<std::size_t>(cells_) * static_cast<std::size_t>(cells_);
  }
  double spacing() const noexcept { return length_ / cells_; }
  double cell_volume() const noexcept { return std::pow(spacing(), dim_); }

  /// Periodic wrap of an axis index.
  int wrap(int j) const noexcept {
    const int r = j % cells_;
    return r < 0 ? r + cells_ : r;
  }
  double center(int j) const noexcept { return (wrap(j) + 0.5) * spacing(); }

  std::size_t index(int i) const noexcept { return static_cast<std::size_t>(wrap(i)); }
  std::size_t index(int ix, int iy) const noexcept {
    return static_cast<std::size_t>(wrap(ix)) * cells_ + static_cast<std::size_t>(wrap(iy));
  }

  /// Index of the cell obtained by reflecting x -> -x in every coordinate.
  std::size_t reflected(std::size_t flat) const noexcept {
    if (dim_ == 1) return static_cast<std::size_t>(cells_ - 1) - flat;
    const int ix = static_cast<int>(flat / cells_);
    const int iy = static_cast<int>(flat % cells_);
    return index(cells_ - 1 - ix, cells_ - 1 - iy);
  }

  friend bool operator==(const TorusGrid&, const TorusGrid&) = default;

 private:
  double length_;
  int dim_;
  int cells_;
};

inline TorusGrid build_grid(double length, int dim, int cells) { return TorusGrid(length, dim, cells); }

inline void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
  if (!(a == b)) throw GridMismatch();
}

/// Real samples at the cell centres of a grid.
class GridFunction {
 public:
  GridFunction(TorusGrid grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw InvalidArgument("grid function needs exactly n^d values");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("grid function values must be finite");
    }
  }

  static GridFunction constant(const TorusGrid& grid, double c) {
    return GridFunction(grid, std::vector<double>(grid.size(), c));
  }

  /// Samples f(x) in 1-D or f(x, y) in 2-D at cell centres.
  template <class F>
  static GridFunction sample(const TorusGrid& grid, F&& f) {
    std::vector<double> v(grid.size());
    const int n = grid.cells_per_dim();
    if constexpr (std::is_invocable_v<F, double, double>) {
      if (grid.dim() != 2) throw InvalidArgument("1-D sampling needs a callable f(x)");
      for (int ix = 0; ix < n; ++ix)
        for (int iy = 0; iy < n; ++iy) v[grid.index(ix, iy)] = f(grid.center(ix), grid.center(iy));
    } else {
      if (grid.dim() != 1) throw InvalidArgument("2-D sampling needs a callable f(x, y)");
      for (int j = 0; j < n; ++j) v[j] = f(grid.center(j));
    }
    return GridFunction(grid, std::move(v));
  }

  const TorusGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vector() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

  friend bool operator==(const GridFunction&, const GridFunction&) = default;

 private:
  TorusGrid grid_;
  std::vector<double> values_;
};

/// Midpoint quadrature: sum of values times cell volume.
inline double integrate(const GridFunction& f) {
  double s = 0.0;
  for (double v : f.values()) s += v;
  return s * f.grid().cell_volume();
}

inline double integrate(const TorusGrid& grid, std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.cell_volume();
}

/// Nonnegative grid values with unit mass (tolerance 1e-12).
class GridDensity {
 public:
  static constexpr double kMassTolerance = 1e-12;

  explicit GridDensity(GridFunction f) : f_(std::move(f)) {
    for (double v : f_.values()) {
      if (v < 0.0) throw InvalidArgument("density values must be nonnegative");
    }
    const double mass = integrate(f_);
    if (std::abs(mass - 1.0) > kMassTolerance) {
      throw InvalidArgument("density must integrate to 1 (got " + std::to_string(mass) + ")");
    }
  }
  GridDensity(const TorusGrid& grid, std::vector<double> values)
      : GridDensity(GridFunction(grid, std::move(values))) {}

  /// Rescales nonnegative values to unit mass.
  static GridDensity normalized(const TorusGrid& grid, std::vector<double> values) {
    double s = 0.0;
    for (double v : values) {
      if (!(v >= 0.0)) throw InvalidArgument("cannot normalise negative or NaN values");
      s += v;
    }
    if (!(s > 0.0)) throw InvalidArgument("cannot normalise a zero measure");
    const double scale = 1.0 / (s * grid.cell_volume());
    for (double& v : values) v *= scale;
    return GridDensity(grid, std::move(values));
  }

  static GridDensity uniform(const TorusGrid& grid) {
    return GridDensity(grid, std::vector<double>(grid.size(), 1.0 / std::pow(grid.length(), grid.dim())));
  }

  const GridFunction& function() const noexcept { return f_; }
  const TorusGrid& grid() const noexcept { return f_.grid(); }
  std::span<const double> values() const noexcept { return f_.values(); }
  const std::vector<double>& vector() const noexcept { return f_.vector(); }
  std::size_t size() const noexcept { return f_.size(); }
  double operator[](std::size_t i) const noexcept { return f_[i]; }
  double min() const { return f_.min(); }
  double max() const { return f_.max(); }

  friend bool operator==(const GridDensity&, const GridDensity&) = default;

 private:
  GridFunction f_;
};

/// Total-variation distance 1/2 ∫|μ - ν|.
inline double tv_distance(const GridDensity& a, const GridDensity& b) {
  require_same_grid(a.grid(), b.grid());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s * a.grid().cell_volume();
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Whole-cell translation; shift is per axis.
inline GridDensity translate(const GridDensity& mu, int shift_x, int shift_y = 0) {
  const TorusGrid& g = mu.grid();
  std::vector<double> v(g.size());
  const int n = g.cells_per_dim();
  if (g.dim() == 1) {
    for (int j = 0; j < n; ++j) v[g.index(j + shift_x)] = mu[g.index(j)];
  } else {
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy) v[g.index(ix + shift_x, iy + shift_y)] = mu[g.index(ix, iy)];
  }
  return GridDensity(g, std::move(v));
}

/// Cell averages onto a coarser grid whose cell count divides the fine one.
inline GridDensity coarsen(const GridDensity& mu, const TorusGrid& coarse) {
  const TorusGrid& fine = mu.grid();
  if (fine.dim() != coarse.dim() || fine.length() != coarse.length() ||
      fine.cells_per_dim() % coarse.cells_per_dim() != 0) {
    throw GridMismatch();
  }
  const int ratio = fine.cells_per_dim() / coarse.cells_per_dim();
  const int n = fine.cells_per_dim();
  std::vector<double> v(coarse.size(), 0.0);
  if (fine.dim() == 1) {
    for (int j = 0; j < n; ++j) v[j / ratio] += mu[j];
  } else {
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy) v[coarse.index(ix / ratio, iy / ratio)] += mu[fine.index(ix, iy)];
  }
  return GridDensity::normalized(coarse, std::move(v));
}

}  // namespace mckv
