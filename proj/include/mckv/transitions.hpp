#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mckv/self_consistency.hpp"

namespace mckv {

enum class Verdict { NoTransition, TransitionExists, DiscontinuityIndicated };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::NoTransition: return "NoTransition";
    case Verdict::TransitionExists: return "TransitionExists";
    case Verdict::DiscontinuityIndicated: return "DiscontinuityIndicated";
  }
  return "?";
}

inline Verdict verdict_from_string(const std::string& s) {
  if (s == "NoTransition") return Verdict::NoTransition;
  if (s == "TransitionExists") return Verdict::TransitionExists;
  if (s == "DiscontinuityIndicated") return Verdict::DiscontinuityIndicated;
  throw InvalidArgument("unknown verdict '" + s + "'");
}

struct ResonanceTriple {
  Wavevector a, b, c;  // a = b + c
  friend bool operator==(const ResonanceTriple&, const ResonanceTriple&) = default;
};

struct TransitionReport {
  bool has_negative_mode = false;
  std::optional<Wavevector> min_mode;
  std::optional<double> min_value;
  std::optional<double> beta_sharp;
  double delta_star = std::numeric_limits<double>::infinity();
  int resonance_cutoff = 16;
  std::optional<ResonanceTriple> resonance_triple;
  Verdict verdict = Verdict::NoTransition;
  /// Refined crossing β and the TV distance from uniform of the branch there.
  std::optional<double> beta_c;
  std::optional<double> tv_jump;

  friend bool operator==(const TransitionReport&, const TransitionReport&) = default;
};

inline constexpr double kAttractiveThreshold = 1e-12;

inline void require_real(const FourierCoeffs& w_hat) {
  double m = 0.0;
  for (std::size_t i = 0; i < w_hat.size(); ++i) m = std::max(m, std::abs(w_hat[i].imag()));
  if (m > 1e-10) throw NonRealCoefficients(m);
}

/// Nonzero modes within the cutoff with Ŵ(k) < -1e-12, in canonical order.
inline std::vector<Wavevector> attractive_modes(const FourierCoeffs& w_hat, int cutoff = 16) {
  require_real(w_hat);
  std::vector<Wavevector> out;
  for (const Wavevector& k : wavevectors_within(w_hat.grid(), cutoff))
    if (w_hat.at(k).real() < -kAttractiveThreshold) out.push_back(k);
  return out;
}

/// L^{d/2} / |min_{k≠0} Ŵ(k)|.
inline double beta_sharp(const FourierCoeffs& w_hat) {
  require_real(w_hat);
  const auto k = dominant_mode(w_hat);
  if (!k) throw NoNegativeMode();
  const double w = w_hat.at(*k).real();
  if (!(w < -kAttractiveThreshold)) throw NoNegativeMode();
  const TorusGrid& g = w_hat.grid();
  return std::pow(g.length(), 0.5 * g.dim()) / std::abs(w);
}

struct DeltaStar {
  double delta = std::numeric_limits<double>::infinity();
  std::optional<ResonanceTriple> triple;
  int cutoff = 16;
};

namespace detail {

inline bool has_triple_with(const std::set<Wavevector>& s, const Wavevector& m) {
  const auto sub = [](const Wavevector& x, const Wavevector& y) { return Wavevector{x[0] - y[0], x[1] - y[1]}; };
  const auto add = [](const Wavevector& x, const Wavevector& y) { return Wavevector{x[0] + y[0], x[1] + y[1]}; };
  for (const Wavevector& o : s) {
    if (o == m) continue;
    // m = o + c, o = m + c, or m + o = a
    for (const Wavevector& c : {sub(m, o), sub(o, m)}) {
      if (c != m && c != o && s.count(c)) return true;
    }
    const Wavevector a = add(m, o);
    if (a != m && a != o && s.count(a)) return true;
  }
  return false;
}

/// First distinct a = b + c in s with a in canonical order and b in descending lexicographic order.
inline std::optional<ResonanceTriple> canonical_triple(const std::vector<Wavevector>& canonical,
                                                       const std::set<Wavevector>& s) {
  for (const Wavevector& a : canonical) {
    if (!s.count(a)) continue;
    for (auto it = s.rbegin(); it != s.rend(); ++it) {
      const Wavevector& b = *it;
      const Wavevector c{a[0] - b[0], a[1] - b[1]};
      if (b != a && c != a && c != b && s.count(c)) return ResonanceTriple{a, b, c};
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Smallest δ over the candidate gaps Ŵ(k) - min Ŵ (|k_i| ≤ cutoff) at which K^δ holds a
/// distinct resonant triple k^a = k^b + k^c. Infinite when none exists within the cutoff.
inline DeltaStar delta_star(const FourierCoeffs& w_hat, int cutoff = 16) {
  require_real(w_hat);
  if (cutoff < 1) throw InvalidArgument("resonance cutoff must be at least 1");
  const auto kmin = dominant_mode(w_hat);
  if (!kmin || !(w_hat.at(*kmin).real() < -kAttractiveThreshold)) throw NoNegativeMode();
  const double wmin = w_hat.at(*kmin).real();
  const double tie = 1e-12 * std::max(1.0, std::abs(wmin));

  std::vector<Wavevector> canonical = wavevectors_within(w_hat.grid(), cutoff);
  std::vector<std::pair<double, Wavevector>> gaps;
  for (const Wavevector& k : canonical) gaps.emplace_back(std::max(0.0, w_hat.at(k).real() - wmin), k);
  std::stable_sort(gaps.begin(), gaps.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  DeltaStar out;
  out.cutoff = cutoff;
  std::set<Wavevector> members;
  std::size_t i = 0;
  while (i < gaps.size()) {
    const double group = gaps[i].first;
    bool found = false;
    std::size_t j = i;
    for (; j < gaps.size() && gaps[j].first <= group + tie; ++j) members.insert(gaps[j].second);
    for (std::size_t q = i; q < j && !found; ++q) found = detail::has_triple_with(members, gaps[q].second);
    if (found) {
      out.delta = group <= tie ? 0.0 : group;
      out.triple = detail::canonical_triple(canonical, members);
      return out;
    }
    i = j;
  }
  return out;
}

struct RescalingVerdict {
  bool admissible = false;
  std::vector<std::string> violated;
};

/// Admissibility of f(ε) = ε^m, g(ε) = ε^ℓ: m > -d-2, ℓ ≥ -d, ℓ < (m-d)/2 + 1, ℓ ≥ m.
inline RescalingVerdict classify_rescaling(double m, double l, int d) {
  if (d != 1 && d != 2) throw InvalidArgument("dimension must be 1 or 2");
  RescalingVerdict v;
  if (!(m > -d - 2.0)) v.violated.push_back("m > -d-2");
  if (!(l >= -d)) v.violated.push_back("l >= -d");
  if (!(l < (m - d) / 2.0 + 1.0)) v.violated.push_back("l < (m-d)/2+1");
  if (!(l >= m)) v.violated.push_back("l >= m");
  v.admissible = v.violated.empty();
  return v;
}

struct ClassifyOptions {
  ContinuationOptions continuation{};
  int resonance_cutoff = 16;
  double tv_jump_threshold = 0.05;
  double energy_tolerance = 1e-9;
  double uniform_tv = kUniformTv;
  double refine_width = 1e-4;
};

struct TransitionResult {
  TransitionReport report;
  std::vector<BranchPoint> branch;
};

/// Existence, bound, resonance gap and a continuation-based continuous/discontinuous verdict.
inline TransitionResult classify_transition(const FreeEnergyModel& model, const std::vector<double>& beta_grid,
                                            const ClassifyOptions& opt = {}) {
  TransitionResult out;
  TransitionReport& r = out.report;
  r.resonance_cutoff = opt.resonance_cutoff;
  const FourierCoeffs& w_hat = model.potential_coefficients();
  require_real(w_hat);
  if (attractive_modes(w_hat, model.grid().cells_per_dim()).empty()) return out;

  r.has_negative_mode = true;
  r.min_mode = dominant_mode(w_hat);
  r.min_value = w_hat.at(*r.min_mode).real();
  r.beta_sharp = beta_sharp(w_hat);
  const DeltaStar ds = delta_star(w_hat, opt.resonance_cutoff);
  r.delta_star = ds.delta;
  r.resonance_triple = ds.triple;
  r.verdict = Verdict::TransitionExists;

  const double bs = *r.beta_sharp;
  if (beta_grid.empty() || beta_grid.front() > 0.5 * bs * (1 + 1e-12) || beta_grid.back() < 1.5 * bs * (1 - 1e-12)) {
    throw InvalidArgument("beta grid must span [0.5, 1.5] x beta_sharp");
  }
  out.branch = branch_continuation(model, beta_grid, *r.min_mode, opt.continuation);

  const auto crosses = [&](const BranchPoint& p) {
    return p.converged && p.tv_distance > opt.uniform_tv && p.free_energy_gap <= opt.energy_tolerance;
  };
  std::size_t hit = out.branch.size();
  for (std::size_t i = 0; i < out.branch.size(); ++i) {
    if (crosses(out.branch[i])) {
      hit = i;
      break;
    }
  }
  if (hit == out.branch.size()) return out;
  if (hit == 0) {
    r.beta_c = out.branch[0].beta;
    r.tv_jump = out.branch[0].tv_distance;
  } else {
    // Bisect between the last non-crossing grid point and the first crossing one.
    double lo = out.branch[hit - 1].beta, hi = out.branch[hit].beta;
    GridDensity warm = out.branch[hit].density;
    double tv_hi = out.branch[hit].tv_distance;
    while (hi - lo > opt.refine_width) {
      const double mid = 0.5 * (lo + hi);
      BranchPoint p = [&] {
        try {
          return solve_stationary(model.with_beta(mid), warm, opt.continuation.solver);
        } catch (const Error& e) {
          throw BranchFailure(mid, e.what());
        }
      }();
      if (crosses(p)) {
        hi = mid;
        tv_hi = p.tv_distance;
        warm = std::move(p.density);
      } else {
        lo = mid;
      }
    }
    r.beta_c = hi;
    r.tv_jump = tv_hi;
  }
  if (*r.tv_jump > opt.tv_jump_threshold) r.verdict = Verdict::DiscontinuityIndicated;
  return out;
}

}  // namespace mckv
