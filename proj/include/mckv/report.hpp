#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mckv/gradient_flow.hpp"
#include "mckv/large_deviations.hpp"
#include "mckv/mountain_pass.hpp"
#include "mckv/torus/io.hpp"
#include "mckv/transitions.hpp"

namespace mckv {

using Json = nlohmann::ordered_json;

namespace detail {

/// JSON has no infinities; they are written as null and read back with the caller's sign.
inline Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double real_from(const Json& j, double if_null) { return j.is_null() ? if_null : j.get<double>(); }

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <class T>
std::optional<T> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

inline Json wavevector_json(const TorusGrid& g, const Wavevector& k) {
  return g.dim() == 1 ? Json::array({k[0]}) : Json::array({k[0], k[1]});
}

inline Wavevector wavevector_from(const Json& j) {
  if (!j.is_array() || j.empty() || j.size() > 2) throw InvalidArgument("wavevector must have 1 or 2 entries");
  return {j[0].get<int>(), j.size() == 2 ? j[1].get<int>() : 0};
}

inline Json grid_json(const TorusGrid& g) { return {{"L", g.length()}, {"d", g.dim()}, {"n", g.cells_per_dim()}}; }

inline TorusGrid grid_from(const Json& j) {
  return TorusGrid(j.at("L").get<double>(), j.at("d").get<int>(), j.at("n").get<int>());
}

inline GridDensity density_from(const TorusGrid& g, const Json& j) {
  return GridDensity(g, j.get<std::vector<double>>());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << text;
  if (!os) throw Error("failed writing " + path);
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

}  // namespace detail

/// Transition character for the one-line summary: the refined classification of an existing
/// transition, or the bare verdict when there is none.
inline std::string transition_character(const TransitionReport& r) {
  switch (r.verdict) {
    case Verdict::NoTransition: return "None";
    case Verdict::TransitionExists: return "Continuous";
    case Verdict::DiscontinuityIndicated: return "Discontinuous";
  }
  return "?";
}

// ---- transitions

/// The grid is needed only to print the wavevectors with the right arity.
inline Json to_json(const TransitionReport& r, const TorusGrid& g) {
  Json j;
  j["has_negative_mode"] = r.has_negative_mode;
  j["min_mode"] = r.min_mode ? Json{{"k", detail::wavevector_json(g, *r.min_mode)}, {"value", *r.min_value}}
                             : Json(nullptr);
  j["beta_sharp"] = detail::optional_json(r.beta_sharp);
  j["delta_star"] = detail::real_or_null(r.delta_star);
  j["resonance_cutoff"] = r.resonance_cutoff;
  if (r.resonance_triple) {
    const auto& t = *r.resonance_triple;
    j["resonance_triple"] = Json::array(
        {detail::wavevector_json(g, t.a), detail::wavevector_json(g, t.b), detail::wavevector_json(g, t.c)});
  } else {
    j["resonance_triple"] = nullptr;
  }
  j["verdict"] = to_string(r.verdict);
  j["character"] = transition_character(r);
  j["beta_c"] = detail::optional_json(r.beta_c);
  j["tv_jump"] = detail::optional_json(r.tv_jump);
  return j;
}

inline TransitionReport transition_report_from_json(const Json& j) {
  TransitionReport r;
  r.has_negative_mode = j.at("has_negative_mode").get<bool>();
  if (!j.at("min_mode").is_null()) {
    r.min_mode = detail::wavevector_from(j["min_mode"].at("k"));
    r.min_value = j["min_mode"].at("value").get<double>();
  }
  r.beta_sharp = detail::optional_from<double>(j.at("beta_sharp"));
  r.delta_star = detail::real_from(j.at("delta_star"), std::numeric_limits<double>::infinity());
  r.resonance_cutoff = j.at("resonance_cutoff").get<int>();
  if (const Json& t = j.at("resonance_triple"); !t.is_null()) {
    if (!t.is_array() || t.size() != 3) throw InvalidArgument("resonance_triple must have three wavevectors");
    r.resonance_triple =
        ResonanceTriple{detail::wavevector_from(t[0]), detail::wavevector_from(t[1]), detail::wavevector_from(t[2])};
  }
  r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  r.beta_c = detail::optional_from<double>(j.at("beta_c"));
  r.tv_jump = detail::optional_from<double>(j.at("tv_jump"));
  return r;
}

inline void write_branch_csv(std::ostream& os, const std::vector<BranchPoint>& branch) {
  os << "beta,residual,order_parameter,free_energy_gap,tv_distance,iterations,converged,fold\n";
  for (const auto& p : branch) {
    os << format_real(p.beta) << ',' << format_real(p.residual) << ',' << format_real(p.order_parameter) << ','
       << format_real(p.free_energy_gap) << ',' << format_real(p.tv_distance) << ',' << p.iterations << ','
       << int(p.converged) << ',' << int(p.fold) << '\n';
  }
}

// ---- mountain pass

inline Json to_json(const MountainPassReport& r) {
  const TorusGrid& g = r.path.beads.front().grid();
  Json j;
  j["grid"] = detail::grid_json(g);
  j["c"] = r.c;
  j["delta"] = r.delta;
  j["converged"] = r.converged;
  j["saddle_residual"] = r.saddle_residual;
  j["saddle_dissipation"] = r.saddle_dissipation;
  j["saddle_tv_a"] = r.saddle_tv_a;
  j["saddle_tv_b"] = r.saddle_tv_b;
  j["distinct"] = r.distinct;
  j["string_barrier"] = r.string_barrier;
  j["argmax"] = r.argmax;
  j["path_sup"] = r.path_sup;
  j["endpoint_energy_a"] = r.endpoint_energy_a;
  j["endpoint_energy_b"] = r.endpoint_energy_b;
  j["relax_iterations"] = r.relax_iterations;
  j["energy_profile"] = r.energy_profile;
  j["saddle"] = r.saddle ? Json(r.saddle->vector()) : Json(nullptr);
  Json path;
  path["parametrisation"] = to_string(r.path.parametrisation);
  path["endpoint_lock"] = r.path.endpoint_lock;
  path["beads"] = Json::array();
  for (const auto& b : r.path.beads) path["beads"].push_back(b.vector());
  j["path"] = std::move(path);
  return j;
}

inline MountainPassReport mountain_pass_report_from_json(const Json& j) {
  const TorusGrid g = detail::grid_from(j.at("grid"));
  MountainPassReport r;
  r.c = j.at("c").get<double>();
  r.delta = j.at("delta").get<double>();
  r.converged = j.at("converged").get<bool>();
  r.saddle_residual = j.at("saddle_residual").get<double>();
  r.saddle_dissipation = j.at("saddle_dissipation").get<double>();
  r.saddle_tv_a = j.at("saddle_tv_a").get<double>();
  r.saddle_tv_b = j.at("saddle_tv_b").get<double>();
  r.distinct = j.at("distinct").get<bool>();
  r.string_barrier = j.at("string_barrier").get<double>();
  r.argmax = j.at("argmax").get<std::size_t>();
  r.path_sup = j.at("path_sup").get<double>();
  r.endpoint_energy_a = j.at("endpoint_energy_a").get<double>();
  r.endpoint_energy_b = j.at("endpoint_energy_b").get<double>();
  r.relax_iterations = j.at("relax_iterations").get<int>();
  r.energy_profile = j.at("energy_profile").get<std::vector<double>>();
  if (!j.at("saddle").is_null()) r.saddle = detail::density_from(g, j["saddle"]);
  const Json& path = j.at("path");
  r.path.parametrisation = parametrisation_from_string(path.at("parametrisation").get<std::string>());
  r.path.endpoint_lock = path.at("endpoint_lock").get<bool>();
  for (const auto& b : path.at("beads")) r.path.beads.push_back(detail::density_from(g, b));
  if (r.path.beads.size() < 2) throw InvalidArgument("barrier report path needs at least two beads");
  return r;
}

inline void write_energy_profile_csv(std::ostream& os, const MountainPassReport& r) {
  os << "bead,energy\n";
  for (std::size_t i = 0; i < r.energy_profile.size(); ++i) os << i << ',' << format_real(r.energy_profile[i]) << '\n';
}

// ---- flow

inline void write_trajectory_csv(std::ostream& os, const FlowTrajectory& t) {
  os << "t,I,dissipation\n";
  for (std::size_t i = 0; i < t.times.size(); ++i)
    os << format_real(t.times[i]) << ',' << format_real(t.energies[i]) << ',' << format_real(t.dissipations[i])
       << '\n';
}

/// One row per frame: t followed by the cell values in flat-index order.
inline void write_frames_csv(std::ostream& os, const std::vector<double>& times, const std::vector<GridDensity>& frames) {
  os << 't';
  for (std::size_t i = 0; i < frames.front().size(); ++i) os << ",c" << i;
  os << '\n';
  for (std::size_t f = 0; f < frames.size(); ++f) {
    os << format_real(times[f]);
    for (double v : frames[f].values()) os << ',' << format_real(v);
    os << '\n';
  }
}

struct FrameSeries {
  std::vector<double> times;
  std::vector<GridDensity> frames;
};

/// Reads write_frames_csv output back; L and d fix the grid, the column count fixes n.
inline FrameSeries read_frames_csv(std::istream& is, double length, int dim) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,c0", 0) != 0) throw InvalidArgument("frames CSV needs a t,c0,... header");
  const std::size_t cells = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  const int n = dim == 1 ? static_cast<int>(cells) : static_cast<int>(std::lround(std::sqrt(double(cells))));
  const TorusGrid g(length, dim, n);
  if (g.size() != cells) throw InvalidArgument("frames CSV column count is not n^d");
  FrameSeries out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != cells + 1) throw InvalidArgument("malformed frames CSV row");
    out.times.push_back(row.front());
    out.frames.emplace_back(GridDensity::normalized(g, std::vector<double>(row.begin() + 1, row.end())));
  }
  return out;
}

// ---- scaling

inline Json to_json(const ScalingStudy& s) {
  Json j;
  j["delta_reference"] = s.delta_reference;
  j["epsilon"] = s.epsilon;
  j["lambda_slack"] = s.lambda_slack;
  j["reference_slope"] = s.reference_slope;
  j["fitted"] = s.fitted;
  j["fit_slope"] = s.fit_slope;
  j["fit_intercept"] = s.fit_intercept;
  j["r_squared"] = s.r_squared;
  j["slope_stderr"] = s.slope_stderr;
  j["slope_check"] = s.slope_check;
  j["monotone"] = s.monotone;
  j["overlap_exceptions"] = s.overlap_exceptions;
  j["bandwidth"] = s.bandwidth;
  j["T"] = s.T;
  j["dt"] = s.dt;
  j["master_seed"] = s.master_seed;
  j["points"] = Json::array();
  for (const auto& p : s.points) {
    j["points"].push_back({{"N", p.n},
                           {"hits", p.hits},
                           {"replicas", p.replicas},
                           {"log_p", detail::real_or_null(p.log_p)},
                           {"half_width", detail::real_or_null(p.half_width)},
                           {"lo", p.lo},
                           {"hi", p.hi},
                           {"censored", p.censored}});
  }
  return j;
}

inline ScalingStudy scaling_study_from_json(const Json& j) {
  ScalingStudy s;
  s.delta_reference = j.at("delta_reference").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.lambda_slack = j.at("lambda_slack").get<double>();
  s.reference_slope = j.at("reference_slope").get<double>();
  s.fitted = j.at("fitted").get<bool>();
  s.fit_slope = j.at("fit_slope").get<double>();
  s.fit_intercept = j.at("fit_intercept").get<double>();
  s.r_squared = j.at("r_squared").get<double>();
  s.slope_stderr = j.at("slope_stderr").get<double>();
  s.slope_check = j.at("slope_check").get<bool>();
  s.monotone = j.at("monotone").get<bool>();
  s.overlap_exceptions = j.at("overlap_exceptions").get<std::vector<std::size_t>>();
  s.bandwidth = j.at("bandwidth").get<int>();
  s.T = j.at("T").get<double>();
  s.dt = j.at("dt").get<double>();
  s.master_seed = j.at("master_seed").get<std::uint64_t>();
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& pj : j.at("points")) {
    ScalingPoint p;
    p.n = pj.at("N").get<std::size_t>();
    p.hits = pj.at("hits").get<std::size_t>();
    p.replicas = pj.at("replicas").get<std::size_t>();
    p.log_p = detail::real_from(pj.at("log_p"), -inf);
    p.half_width = detail::real_from(pj.at("half_width"), inf);
    p.lo = pj.at("lo").get<double>();
    p.hi = pj.at("hi").get<double>();
    p.censored = pj.at("censored").get<bool>();
    s.points.push_back(p);
  }
  return s;
}

/// log_p is left empty for zero-hit points.
inline void write_scaling_csv(std::ostream& os, const ScalingStudy& s) {
  os << "N,hits,replicas,log_p,lo,hi\n";
  for (const auto& p : s.points) {
    os << p.n << ',' << p.hits << ',' << p.replicas << ',' << (std::isfinite(p.log_p) ? format_real(p.log_p) : "")
       << ',' << format_real(p.lo) << ',' << format_real(p.hi) << '\n';
  }
}

/// Serialised text of a report: two-space indent, trailing newline.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace mckv
