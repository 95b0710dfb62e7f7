#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "mckv/free_energy.hpp"
#include "mckv/gradient_flow.hpp"
#include "mckv/parallel.hpp"
#include "mckv/torus/spectral.hpp"
#include "mckv/wasserstein.hpp"

namespace mckv {

/// ‖r‖²_{Ḣ⁻¹(μ)} in d = 1: ∫ (R + c)²/μ with R' = r and c = -(∫R/μ)/(∫1/μ).
/// R is the spectral antiderivative at cell centres (Nyquist content dropped), so the value is exact
/// for trigonometric polynomials.
inline double weighted_hminus1(const GridDensity& mu, const GridFunction& r) {
  require_same_grid(mu.grid(), r.grid());
  const TorusGrid& g = mu.grid();
  if (g.dim() != 1) throw DimensionUnsupported(g.dim());
  const double mean = integrate(r);
  if (std::abs(mean) > 1e-10) throw NonZeroMean(mean);
  require_positive(mu.values());

  const std::size_t n = g.size();
  std::vector<Complex> in(n), spec(n), out(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = r[i];
  detail::dft(g, in.data(), spec.data(), FFTW_FORWARD);
  const FourierCoeffs shape(g, std::vector<Complex>(n));
  const double w0 = 2.0 * std::numbers::pi / g.length();
  for (std::size_t i = 0; i < n; ++i) {
    const int k = shape.wavevector(i)[0];
    spec[i] = (k == 0 || shape.is_nyquist(i)) ? Complex{} : spec[i] / Complex(0.0, w0 * k) / double(n);
  }
  detail::dft(g, spec.data(), out.data(), FFTW_BACKWARD);

  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a += out[i].real() / mu[i];
    b += 1.0 / mu[i];
  }
  const double c = -a / b;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = out[i].real() + c;
    s += v * v / mu[i];
  }
  return s * g.cell_volume();
}

/// S = ¼ ∫ ‖∂_t μ - ∇·(μ∇ξ)‖²_{Ḣ⁻¹(μ)} dt on frames spaced dt apart: central differences inside,
/// one-sided at the ends, trapezoidal weights in time.
inline double path_action(const FreeEnergyModel& model, const std::vector<GridDensity>& frames, double dt) {
  if (frames.size() < 3) throw InvalidArgument("path_action needs at least three frames");
  if (!(dt > 0.0)) throw InvalidArgument("frame spacing must be positive");
  const TorusGrid& g = model.grid();
  if (g.dim() != 1) throw DimensionUnsupported(g.dim());
  for (const GridDensity& f : frames) require_same_grid(g, f.grid());
  const std::size_t m = frames.size();
  const std::size_t n = g.size();
  double s = 0.0;
  std::vector<double> r(n);
  for (std::size_t t = 0; t < m; ++t) {
    const std::size_t prev = t == 0 ? 0 : t - 1, next = t + 1 == m ? t : t + 1;
    const double span = double(next - prev) * dt;
    const GridFunction div = flow_divergence(model, frames[t]);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = (frames[next][i] - frames[prev][i]) / span - div[i];
      mean += r[i];
    }
    // remove roundoff in the mass of the difference quotient
    mean /= double(n);
    for (double& v : r) v -= mean;
    const double w = (t == 0 || t + 1 == m) ? 0.5 : 1.0;
    s += w * weighted_hminus1(frames[t], GridFunction(g, r));
  }
  return 0.25 * s * dt;
}

/// SplitMix64 finaliser.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Per-replica stream seed derived from (master, replica) only.
inline std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica) {
  return splitmix64(splitmix64(master) ^ (replica + 0x632BE59BD9B4E019ull));
}

struct EnsembleState {
  int dim = 1;
  /// Particle-major coordinates, dim per particle, each in [0, L).
  std::vector<double> positions;
  std::uint64_t master_seed = 0;
  std::uint64_t replica = 0;
  std::uint64_t step = 0;

  std::size_t size() const noexcept { return positions.size() / static_cast<std::size_t>(dim); }
};

namespace detail {

/// ∇W on the model grid, sampled by (bi)linear interpolation between cell centres.
class InteractionForce {
 public:
  explicit InteractionForce(const FreeEnergyModel& model)
      : grid_(model.grid()), zero_(model.potential_is_zero()) {
    if (!zero_) grad_ = spectral_gradient(model.potential());
  }

  bool zero() const noexcept { return zero_; }

  /// Writes ∇W(y) into out[0..dim).
  void eval(const double* y, double* out) const {
    const double h = grid_.spacing();
    if (grid_.dim() == 1) {
      const double u = y[0] / h - 0.5;
      const double fl = std::floor(u);
      const double a = u - fl;
      const int j = static_cast<int>(fl);
      out[0] = (1.0 - a) * grad_[0][grid_.index(j)] + a * grad_[0][grid_.index(j + 1)];
      return;
    }
    const double ux = y[0] / h - 0.5, uy = y[1] / h - 0.5;
    const double fx = std::floor(ux), fy = std::floor(uy);
    const double ax = ux - fx, ay = uy - fy;
    const int jx = static_cast<int>(fx), jy = static_cast<int>(fy);
    for (int c = 0; c < 2; ++c) {
      const GridFunction& G = grad_[c];
      out[c] = (1 - ax) * (1 - ay) * G[grid_.index(jx, jy)] + ax * (1 - ay) * G[grid_.index(jx + 1, jy)] +
               (1 - ax) * ay * G[grid_.index(jx, jy + 1)] + ax * ay * G[grid_.index(jx + 1, jy + 1)];
    }
  }

 private:
  TorusGrid grid_;
  bool zero_;
  std::vector<GridFunction> grad_;
};

inline double wrap_coordinate(double x, double length) {
  if (x >= 0.0 && x < length) return x;
  if (x < 0.0 && x >= -length) {
    x += length;
    return x >= length ? 0.0 : x;
  }
  x = std::fmod(x, length);
  if (x < 0.0) x += length;
  return x >= length ? 0.0 : x;
}

/// Euler–Maruyama: X_i += -(1/N) Σ_j ∇W(X_i - X_j) dt + sqrt(2 dt/β) ξ_i, then periodic wrap.
inline void particle_steps(const FreeEnergyModel& model, const InteractionForce& force, EnsembleState& s,
                           long steps, double dt, std::mt19937_64& rng) {
  const int d = s.dim;
  const double length = model.grid().length();
  const std::size_t n = s.size();
  const double noise = std::sqrt(2.0 * dt / model.beta());
  std::normal_distribution<double> gauss;
  std::vector<double> drift(n * d);
  double diff[2], g[2];
  for (long k = 0; k < steps; ++k) {
    std::fill(drift.begin(), drift.end(), 0.0);
    if (!force.zero()) {
      // W even makes ∇W odd, so each pair is evaluated once; the i = j term is ∇W(0).
      for (int c = 0; c < d; ++c) diff[c] = 0.0;
      force.eval(diff, g);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) drift[i * d + c] -= g[c];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          for (int c = 0; c < d; ++c) diff[c] = wrap_coordinate(s.positions[i * d + c] - s.positions[j * d + c], length);
          force.eval(diff, g);
          for (int c = 0; c < d; ++c) {
            drift[i * d + c] -= g[c];
            drift[j * d + c] += g[c];
          }
        }
      }
    }
    for (std::size_t i = 0; i < n * d; ++i) {
      const double x = s.positions[i] + drift[i] / double(n) * dt + noise * gauss(rng);
      s.positions[i] = wrap_coordinate(x, length);
    }
    ++s.step;
  }
}

inline EnsembleState uniform_ensemble(const TorusGrid& g, std::size_t n, std::uint64_t master, std::uint64_t replica,
                                      std::mt19937_64& rng) {
  EnsembleState s;
  s.dim = g.dim();
  s.master_seed = master;
  s.replica = replica;
  s.positions.resize(n * g.dim());
  std::uniform_real_distribution<double> u(0.0, g.length());
  for (double& x : s.positions) x = wrap_coordinate(u(rng), g.length());
  return s;
}

}  // namespace detail

struct ParticleOptions {
  std::uint64_t replica = 0;
  /// Keep a snapshot every this many steps (0: only the initial and final states).
  long record_every = 0;
};

/// Interacting particle system from i.i.d. uniform initial positions; thinned snapshots.
inline std::vector<EnsembleState> simulate_particles(const FreeEnergyModel& model, std::size_t n, double T, double dt,
                                                     std::uint64_t seed, const ParticleOptions& opt = {}) {
  if (n < 1) throw InvalidArgument("need at least one particle");
  if (!(dt > 0.0) || !(T >= 0.0)) throw InvalidArgument("time step must be positive and horizon nonnegative");
  std::mt19937_64 rng(replica_seed(seed, opt.replica));
  const detail::InteractionForce force(model);
  EnsembleState s = detail::uniform_ensemble(model.grid(), n, seed, opt.replica, rng);
  const long steps = std::lround(T / dt);
  std::vector<EnsembleState> out{s};
  long done = 0;
  while (done < steps) {
    const long chunk = opt.record_every > 0 ? std::min(opt.record_every, steps - done) : steps - done;
    detail::particle_steps(model, force, s, chunk, dt, rng);
    done += chunk;
    out.push_back(s);
  }
  return out;
}

/// Binned particle density smoothed by a periodic triangular kernel with weights ∝ (b + 1 - |m|), |m| ≤ b
/// (per axis in d = 2); b = 0 is plain binning.
inline GridDensity empirical_density(const EnsembleState& state, const TorusGrid& grid, int bandwidth) {
  if (bandwidth < 0) throw InvalidArgument("bandwidth must be nonnegative");
  if (state.dim != grid.dim()) throw GridMismatch();
  const int n = grid.cells_per_dim();
  const double h = grid.spacing();
  const int d = grid.dim();
  const auto cell = [&](double x) { return std::clamp(static_cast<int>(std::floor(x / h)), 0, n - 1); };
  std::vector<double> counts(grid.size(), 0.0);
  for (std::size_t p = 0; p < state.size(); ++p) {
    if (d == 1)
      counts[cell(state.positions[p])] += 1.0;
    else
      counts[grid.index(cell(state.positions[2 * p]), cell(state.positions[2 * p + 1]))] += 1.0;
  }
  if (bandwidth > 0) {
    std::vector<double> w;
    for (int m = -bandwidth; m <= bandwidth; ++m) w.push_back(bandwidth + 1 - std::abs(m));
    for (int axis = 0; axis < d; ++axis) {
      std::vector<double> out(grid.size(), 0.0);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (counts[i] == 0.0) continue;
        const int ix = d == 1 ? static_cast<int>(i) : static_cast<int>(i) / n;
        const int iy = d == 1 ? 0 : static_cast<int>(i) % n;
        for (int m = -bandwidth; m <= bandwidth; ++m) {
          const std::size_t j = d == 1 ? grid.index(ix + m) : axis == 0 ? grid.index(ix + m, iy) : grid.index(ix, iy + m);
          out[j] += counts[i] * w[m + bandwidth];
        }
      }
      counts.swap(out);
    }
  }
  return GridDensity::normalized(grid, std::move(counts));
}

struct WilsonInterval {
  double lo = 0.0, hi = 1.0;
};

inline constexpr double kWilsonZ = 1.959963984540054;  // two-sided 95%

inline WilsonInterval wilson_interval(std::size_t hits, std::size_t trials, double z = kWilsonZ) {
  if (trials == 0) throw InvalidArgument("Wilson interval needs at least one trial");
  const double n = double(trials), p = double(hits) / n, z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r_squared = 0.0, slope_stderr = 0.0;
};

/// Ordinary least squares y ≈ slope·x + intercept.
inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("least squares needs two or more aligned points");
  const double m = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("least squares needs distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    sse += e * e;
  }
  f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  f.slope_stderr = x.size() > 2 ? std::sqrt(sse / (m - 2) / sxx) : 0.0;
  return f;
}

struct EscapeOptions {
  int bandwidth = 2;
  unsigned threads = 1;
};

struct EscapeEstimate {
  std::size_t hits = 0;
  std::size_t replicas = 0;
  double p = 0.0;
  WilsonInterval interval;
};

inline constexpr std::size_t kMinReplicas = 100;

/// Monte Carlo frequency of W₂(empirical density at T, target) ≤ ε from i.i.d. uniform starts.
/// Membership is judged on the target's grid; particles feel ∇W from the model grid.
inline EscapeEstimate escape_probability(const FreeEnergyModel& model, std::size_t n, double T, double dt,
                                         double epsilon, const GridDensity& target, std::size_t replicas,
                                         std::uint64_t master_seed, const EscapeOptions& opt = {}) {
  const TorusGrid& g = model.grid();
  if (g.dim() != 1 || target.grid().dim() != 1) throw DimensionUnsupported(g.dim() != 1 ? g.dim() : target.grid().dim());
  if (target.grid().length() != g.length()) throw GridMismatch();
  if (replicas < kMinReplicas) throw InvalidArgument("escape estimates need at least 100 replicas");
  if (n < 1 || !(dt > 0.0) || !(T >= 0.0) || !(epsilon >= 0.0)) throw InvalidArgument("invalid particle parameters");
  EscapeEstimate est;
  est.replicas = replicas;
  if (epsilon > 0.0) {
    const detail::InteractionForce force(model);
    const long steps = std::lround(T / dt);
    std::vector<char> hit(replicas, 0);
    parallel_for(replicas, opt.threads, [&](std::size_t r) {
      std::mt19937_64 rng(replica_seed(master_seed, r));
      EnsembleState s = detail::uniform_ensemble(g, n, master_seed, r, rng);
      detail::particle_steps(model, force, s, steps, dt, rng);
      const GridDensity emp = empirical_density(s, target.grid(), opt.bandwidth);
      hit[r] = w2_periodic_1d(emp, target) <= epsilon;
    });
    for (char h : hit) est.hits += static_cast<std::size_t>(h);
  }
  est.p = double(est.hits) / double(replicas);
  est.interval = wilson_interval(est.hits, replicas);
  return est;
}

/// Points with fewer hits only bound the probability from above and stay out of the fit.
inline constexpr std::size_t kMinHits = 5;
inline constexpr std::size_t kMinFitPoints = 3;

struct ScalingPoint {
  std::size_t n = 0;
  std::size_t hits = 0;
  std::size_t replicas = 0;
  double log_p = 0.0;  // -inf when hits = 0
  double half_width = 0.0;  // of the Wilson interval in log space
  double lo = 0.0, hi = 0.0;  // Wilson interval for p
  bool censored = false;

  friend bool operator==(const ScalingPoint&, const ScalingPoint&) = default;
};

struct ScalingStudy {
  std::vector<ScalingPoint> points;
  double fit_slope = 0.0;
  double fit_intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  bool fitted = false;
  double delta_reference = 0.0;
  double epsilon = 0.0;
  double lambda_slack = 0.0;  // |λ| ε²
  double reference_slope = 0.0;  // -(Δ - |λ|ε²)
  /// slope ≤ reference_slope + 2 standard errors.
  bool slope_check = false;
  /// log p̂ nonincreasing in N across uncensored points, ignoring rises covered by interval overlap.
  bool monotone = false;
  std::vector<std::size_t> overlap_exceptions;
  int bandwidth = 2;
  double T = 0.0, dt = 0.0;
  std::uint64_t master_seed = 0;

  friend bool operator==(const ScalingStudy&, const ScalingStudy&) = default;
};

/// Raised when fewer than three N values have enough hits; carries the bound-only study.
class InsufficientHitsStudy : public InsufficientHits {
 public:
  InsufficientHitsStudy(std::size_t usable, ScalingStudy study)
      : InsufficientHits(usable, kMinFitPoints), study_(std::move(study)) {}
  const ScalingStudy& study() const noexcept { return study_; }

 private:
  ScalingStudy study_;
};

/// Escape probabilities across N and the fit of log p̂ against N, compared with -(Δ - |λ|ε²).
inline ScalingStudy scaling_study(const FreeEnergyModel& model, const std::vector<std::size_t>& n_list, double T,
                                  double dt, double epsilon, const GridDensity& target, std::size_t replicas,
                                  std::uint64_t master_seed, double delta_reference, const EscapeOptions& opt = {}) {
  if (n_list.empty() || !std::is_sorted(n_list.begin(), n_list.end()) ||
      std::adjacent_find(n_list.begin(), n_list.end()) != n_list.end()) {
    throw InvalidArgument("N values must be strictly increasing");
  }
  ScalingStudy st;
  st.delta_reference = delta_reference;
  st.epsilon = epsilon;
  st.lambda_slack = std::abs(model.lambda()) * epsilon * epsilon;
  st.reference_slope = -(delta_reference - st.lambda_slack);
  st.bandwidth = opt.bandwidth;
  st.T = T;
  st.dt = dt;
  st.master_seed = master_seed;
  std::vector<double> xs, ys;
  for (std::size_t n : n_list) {
    const EscapeEstimate e = escape_probability(model, n, T, dt, epsilon, target, replicas, master_seed, opt);
    ScalingPoint p;
    p.n = n;
    p.hits = e.hits;
    p.replicas = e.replicas;
    p.lo = e.interval.lo;
    p.hi = e.interval.hi;
    p.censored = e.hits < kMinHits;
    p.log_p = e.hits > 0 ? std::log(e.p) : -std::numeric_limits<double>::infinity();
    p.half_width = e.hits > 0 ? 0.5 * (std::log(p.hi) - std::log(p.lo)) : std::numeric_limits<double>::infinity();
    if (!p.censored) {
      xs.push_back(double(n));
      ys.push_back(p.log_p);
    }
    st.points.push_back(p);
  }
  st.monotone = true;
  const ScalingPoint* last = nullptr;
  for (std::size_t i = 0; i < st.points.size(); ++i) {
    const ScalingPoint& p = st.points[i];
    if (p.censored) continue;
    if (last && p.log_p > last->log_p) {
      if (p.lo <= last->hi)
        st.overlap_exceptions.push_back(i);
      else
        st.monotone = false;
    }
    last = &p;
  }
  if (xs.size() < kMinFitPoints) throw InsufficientHitsStudy(xs.size(), std::move(st));
  const LinearFit f = least_squares(xs, ys);
  st.fit_slope = f.slope;
  st.fit_intercept = f.intercept;
  st.r_squared = f.r_squared;
  st.slope_stderr = f.slope_stderr;
  st.fitted = true;
  st.slope_check = st.fit_slope <= st.reference_slope + 2.0 * st.slope_stderr;
  return st;
}

}  // namespace mckv
