#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mckv/cli/config.hpp"
#include "mckv/potentials.hpp"
#include "mckv/report.hpp"
#include "mckv/svg.hpp"

namespace mckv::cli {

inline constexpr std::string_view kVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitSolver = 2, kExitInsufficientHits = 3 };

/// Endpoint states must be fixed points to this residual before a barrier is searched.
inline constexpr double kEndpointResidual = 1e-6;

struct RunOptions {
  std::string command;
  std::string config_path;
  std::string out;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

/// Files held in memory until the command has finished, so a failed run leaves nothing half written.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  void add(std::string name, std::string text) { files.emplace_back(std::move(name), std::move(text)); }
};

struct CommandResult {
  int code = kExitOk;
  std::string summary;
  Outputs outputs;
};

namespace detail {

inline std::string to_text(const std::function<void(std::ostream&)>& write) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  write(os);
  return os.str();
}

inline std::string grid_csv(const GridFunction& f) {
  return to_text([&](std::ostream& os) { write_csv(os, f); });
}

inline bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::is_regular_file(path, ec);
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

inline TorusGrid make_grid(double L, int d, int n, const std::string& what) {
  try {
    return TorusGrid(L, d, n);
  } catch (const Error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline GridFunction load_grid_csv(const std::string& path, const TorusGrid& g, const std::string& key) {
  require(file_exists(path), key + ": cannot open '" + path + "'");
  try {
    std::ifstream is(path);
    GridFunction f = read_csv(is, g.length());
    require(f.grid() == g, key + ": '" + path + "' is not on the configured grid");
    return f;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

inline GridFunction build_potential(const RunConfig& c, const TorusGrid& g) {
  const PotentialConfig& p = c.potential;
  require(std::isfinite(p.amplitude), "potential.amplitude must be finite");
  std::vector<double> v;
  if (p.kind == "neg_cosine") {
    v = cosine_potential(g, {{1, -1.0}}).vector();
  } else if (p.kind == "resonant") {
    require(!p.modes.empty() && p.modes.size() == p.weights.size(),
            "potential.modes and potential.weights must be nonempty and of equal length");
    std::vector<CosineMode> modes;
    for (std::size_t i = 0; i < p.modes.size(); ++i) modes.push_back({p.modes[i], p.weights[i]});
    v = cosine_potential(g, modes).vector();
  } else if (p.kind == "samples_file") {
    require(!p.file.empty(), "potential.file is required for kind = \"samples_file\"");
    v = load_grid_csv(p.file, g, "potential.file").vector();
  } else if (p.kind == "zero") {
    v.assign(g.size(), 0.0);
  } else {
    throw ConfigError("potential.kind must be neg_cosine, resonant, samples_file or zero");
  }
  for (double& x : v) x *= p.amplitude;
  return GridFunction(g, std::move(v));
}

inline FreeEnergyModel build_model(const RunConfig& c, const TorusGrid& g, double beta) {
  require(beta > 0.0 && std::isfinite(beta), "model.beta must be positive");
  try {
    return FreeEnergyModel(beta, build_potential(c, g));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("potential: ") + e.what());
  }
}

inline SolverOptions solver_options(const RunConfig& c) {
  require(c.solver.tol > 0.0, "solver.tol must be positive");
  require(c.solver.max_iter >= 1, "solver.max_iter must be at least 1");
  require(c.solver.damping > 0.0 && c.solver.damping <= 1.0, "solver.damping must lie in (0, 1]");
  return {c.solver.tol, c.solver.max_iter, c.solver.damping};
}

/// A density named in the config: a keyword resolved at compute time, or a file loaded up front.
struct StateSpec {
  enum class Kind { Uniform, Seeded, Clustered, File, Barrier } kind = Kind::Uniform;
  std::optional<GridDensity> loaded;
};

inline StateSpec parse_state(const std::string& s, const TorusGrid& g, const std::string& key,
                             bool allow_seeded = true) {
  using K = StateSpec::Kind;
  if (s == "uniform") return {K::Uniform, std::nullopt};
  if (s == "clustered") return {K::Clustered, std::nullopt};
  if (s == "seeded" && allow_seeded) return {K::Seeded, std::nullopt};
  require(!s.empty(), key + " must not be empty");
  const GridFunction f = load_grid_csv(s, g, key);
  const double mass = integrate(f);
  require(f.min() >= 0.0 && std::abs(mass - 1.0) <= 1e-6, key + ": '" + s + "' is not a probability density");
  return {K::File, GridDensity::normalized(g, f.vector())};
}

/// Large concentrated start that lands on the clustered branch wherever one exists.
inline GridDensity clustered_seed(const FreeEnergyModel& m) {
  return mckv::detail::cosine_seed(m.grid(), order_mode(m), 4.0, true);
}

inline GridDensity realise(const StateSpec& s, const FreeEnergyModel& m, const SolverOptions& opt, double seed_amplitude,
                           bool solve_clustered) {
  using K = StateSpec::Kind;
  switch (s.kind) {
    case K::Uniform: return GridDensity::uniform(m.grid());
    case K::Seeded: return seeded_uniform(m.grid(), order_mode(m), seed_amplitude);
    case K::Clustered: return solve_clustered ? solve_stationary(m, clustered_seed(m), opt).density : clustered_seed(m);
    case K::File:
    case K::Barrier: return *s.loaded;
  }
  throw InvalidArgument("unknown state");
}

/// Runs the numerical stage; library failures become exit code 2. Anything thrown before this
/// stage is a configuration problem.
inline CommandResult solver_stage(const std::function<CommandResult()>& body) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    CommandResult r;
    r.code = kExitSolver;
    r.summary = std::string("solver failure: ") + e.what();
    return r;
  }
}

inline Json read_report(const std::string& path, const std::string& key) {
  require(!path.empty(), key + " is required");
  require(file_exists(path), key + ": cannot open '" + path + "'");
  try {
    return mckv::detail::read_json_file(path);
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace detail

// ---- classify

inline std::vector<double> auto_beta_grid(double beta_sharp, int points) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = beta_sharp * (0.5 + double(i) / (points - 1));
  return g;
}

inline CommandResult cmd_classify(const RunConfig& c, const RunOptions& o) {
  using detail::require;
  const TorusGrid g = detail::make_grid(c.grid.L, c.grid.d, c.grid.n, "grid");
  const FreeEnergyModel model = detail::build_model(c, g, 1.0);
  ClassifyOptions opt;
  opt.continuation.solver = detail::solver_options(c);
  opt.continuation.cold_start = c.solver.cold_start;
  opt.continuation.threads = o.threads;
  require(c.classify.resonance_cutoff >= 1, "classify.resonance_cutoff must be at least 1");
  require(c.classify.tv_jump_threshold > 0.0, "classify.tv_jump_threshold must be positive");
  opt.resonance_cutoff = c.classify.resonance_cutoff;
  opt.tv_jump_threshold = c.classify.tv_jump_threshold;

  std::vector<double> betas = c.model.beta_grid;
  if (!betas.empty()) {
    require(betas.size() >= 2, "model.beta_grid needs at least two values");
    for (std::size_t i = 0; i < betas.size(); ++i) {
      require(betas[i] > 0.0 && std::isfinite(betas[i]), "model.beta_grid values must be positive");
      require(i == 0 || betas[i] > betas[i - 1], "model.beta_grid must be strictly increasing");
    }
  } else {
    require(c.model.beta_grid_points >= 2, "model.beta_grid_points must be at least 2");
  }
  const FourierCoeffs& w_hat = model.potential_coefficients();
  require(attractive_modes(w_hat, g.cells_per_dim()).empty() || betas.empty() ||
              (betas.front() <= 0.5 * beta_sharp(w_hat) * (1 + 1e-12) &&
               betas.back() >= 1.5 * beta_sharp(w_hat) * (1 - 1e-12)),
          "model.beta_grid must span [0.5, 1.5] x beta_sharp");

  return detail::solver_stage([&] {
    if (betas.empty() && !attractive_modes(w_hat, g.cells_per_dim()).empty())
      betas = auto_beta_grid(beta_sharp(w_hat), c.model.beta_grid_points);
    const TransitionResult res = classify_transition(model, betas, opt);
    const TransitionReport& r = res.report;
    CommandResult out;
    out.outputs.add("report.json", dump(to_json(r, g)));
    out.outputs.add("branch.csv", detail::to_text([&](std::ostream& os) { write_branch_csv(os, res.branch); }));
    if (!res.branch.empty()) {
      svg::Series s{{}, {}, "order parameter", "#1f77b4", true};
      for (const auto& p : res.branch) {
        s.x.push_back(p.beta);
        s.y.push_back(p.order_parameter);
      }
      out.outputs.add("branch.svg", svg::render({"Stationary branch", "beta", "order parameter", {s}}));
    }
    std::ostringstream line;
    line << "verdict: " << to_string(r.verdict) << " (" << transition_character(r) << ")";
    if (r.beta_sharp) line << ", beta_sharp = " << format_real(*r.beta_sharp);
    line << ", delta_star = " << (std::isfinite(r.delta_star) ? format_real(r.delta_star) : "inf");
    if (r.beta_c) line << ", beta_c = " << format_real(*r.beta_c);
    out.summary = line.str();
    return out;
  });
}

// ---- barrier

inline CommandResult cmd_barrier(const RunConfig& c, const RunOptions& o) {
  using detail::require;
  const TorusGrid g = detail::make_grid(c.grid.L, c.grid.d, c.grid.n, "grid");
  double beta = c.model.beta;
  if (!c.endpoints.classify_report.empty()) {
    const Json j = detail::read_report(c.endpoints.classify_report, "endpoints.classify_report");
    TransitionReport tr;
    try {
      tr = transition_report_from_json(j);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("endpoints.classify_report: ") + e.what());
    }
    require(tr.beta_c.has_value(), "endpoints.classify_report has no measured beta_c");
    beta = *tr.beta_c;
  }
  const FreeEnergyModel model = detail::build_model(c, g, beta);
  const SolverOptions sopt = detail::solver_options(c);
  require(c.string.beads >= kMinBeads, "string.beads must be at least 8");
  require(c.string.steps >= 0, "string.steps must be nonnegative");
  require(c.string.dt >= 0.0, "string.dt must be nonnegative");
  require(c.string.saddle_tol > 0.0, "string.saddle_tol must be positive");
  BarrierOptions opt;
  try {
    opt.mode = parametrisation_from_string(c.string.parametrisation);
  } catch (const Error& e) {
    throw ConfigError(std::string("string.parametrisation: ") + e.what());
  }
  require(opt.mode == Parametrisation::L2 || g.dim() == 1, "Quantile parametrisation needs d = 1");
  opt.beads = c.string.beads;
  opt.relax.steps = c.string.steps;
  opt.relax.dt = c.string.dt;
  opt.relax.threads = o.threads;
  opt.saddle.tol = c.string.saddle_tol;
  const detail::StateSpec sa = detail::parse_state(c.endpoints.a, g, "endpoints.a", false);
  const detail::StateSpec sb = detail::parse_state(c.endpoints.b, g, "endpoints.b", false);

  return detail::solver_stage([&] {
    const GridDensity a = detail::realise(sa, model, sopt, 0.0, true);
    const GridDensity b = detail::realise(sb, model, sopt, 0.0, true);
    CommandResult out;
    const double ra = fixed_point_residual(model, a), rb = fixed_point_residual(model, b);
    if ((ra > kEndpointResidual || rb > kEndpointResidual) && !o.force) {
      out.code = kExitSolver;
      out.summary = "endpoint is not a fixed point (residuals " + format_real(ra) + ", " + format_real(rb) +
                    "); rerun with --force to search anyway";
      return out;
    }
    const MountainPassReport r = barrier_certificate(model, a, b, opt);
    Json j = to_json(r);
    j["beta"] = model.beta();
    out.outputs.add("barrier.json", dump(j));
    out.outputs.add("energy_profile.csv",
                    detail::to_text([&](std::ostream& os) { write_energy_profile_csv(os, r); }));
    for (std::size_t i = 0; i < r.path.beads.size(); ++i) {
      std::ostringstream name;
      name << "path/bead_" << std::setw(3) << std::setfill('0') << i << ".csv";
      out.outputs.add(name.str(), detail::grid_csv(r.path.beads[i].function()));
    }
    if (r.saddle) out.outputs.add("saddle.csv", detail::grid_csv(r.saddle->function()));
    svg::Series prof{{}, r.energy_profile, "I along the string", "#1f77b4", false};
    for (std::size_t i = 0; i < r.energy_profile.size(); ++i) prof.x.push_back(double(i));
    svg::Series top{{0.0, double(r.energy_profile.size() - 1)}, {r.c, r.c}, "barrier c", "#d62728", false, true};
    out.outputs.add("energy_profile.svg", svg::render({"Energy along the string", "bead", "I", {prof, top}}));
    out.summary = "barrier: c = " + format_real(r.c) + ", delta = " + format_real(r.delta) +
                  ", saddle residual = " + format_real(r.saddle_residual) + (r.converged ? "" : " (unrefined)");
    return out;
  });
}

// ---- scaling

inline CommandResult cmd_scaling(const RunConfig& c, const RunOptions& o) {
  using detail::require;
  const ParticlesConfig& p = c.particles;
  const TorusGrid g = detail::make_grid(c.grid.L, c.grid.d, c.grid.n, "grid");
  require(g.dim() == 1, "scaling needs d = 1");
  const Json bj = detail::read_report(p.barrier_report, "particles.barrier_report");
  // delta is only meaningful at the inverse temperature the barrier was computed at
  const auto beta_it = bj.find("beta");
  require(beta_it != bj.end() && beta_it->is_number() && beta_it->get<double>() > 0.0,
          "particles.barrier_report has no positive beta");
  const FreeEnergyModel model = detail::build_model(c, g, beta_it->get<double>());
  const SolverOptions sopt = detail::solver_options(c);
  MountainPassReport barrier;
  try {
    barrier = mountain_pass_report_from_json(bj);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("particles.barrier_report: ") + e.what());
  }
  require(!p.n_list.empty(), "particles.N_list must not be empty");
  for (std::size_t i = 1; i < p.n_list.size(); ++i)
    require(p.n_list[i] > p.n_list[i - 1], "particles.N_list must be strictly increasing");
  require(p.T >= 0.0 && std::isfinite(p.T), "particles.T must be nonnegative");
  require(p.dt > 0.0 && std::isfinite(p.dt), "particles.dt must be positive");
  require(p.epsilon >= 0.0 && std::isfinite(p.epsilon), "particles.epsilon must be nonnegative");
  require(p.replicas >= kMinReplicas, "particles.replicas must be at least 100");
  require(p.bandwidth >= 0, "particles.bandwidth must be nonnegative");
  const TorusGrid membership = detail::make_grid(g.length(), 1, p.membership_n, "particles.membership_n");
  require(p.membership_n <= g.cells_per_dim(), "particles.membership_n must not exceed grid.n");

  detail::StateSpec target;
  if (p.target == "barrier") {
    const GridDensity& last = barrier.path.beads.back();
    require(last.grid().length() == g.length() && last.grid().dim() == 1 &&
                last.grid().cells_per_dim() % p.membership_n == 0,
            "particles.target = \"barrier\": report grid is incompatible with the membership grid");
    target = {detail::StateSpec::Kind::Barrier, last};
  } else {
    target = detail::parse_state(p.target, g, "particles.target", false);
  }

  return detail::solver_stage([&] {
    const GridDensity fine = detail::realise(target, model, sopt, 0.0, true);
    const GridDensity tgt = coarsen(fine, membership);
    const EscapeOptions eopt{p.bandwidth, o.threads};
    CommandResult out;
    ScalingStudy st;
    try {
      st = scaling_study(model, p.n_list, p.T, p.dt, p.epsilon, tgt, p.replicas, p.master_seed, barrier.delta, eopt);
    } catch (const InsufficientHitsStudy& e) {
      st = e.study();
      out.code = kExitInsufficientHits;
    }
    out.outputs.add("scaling.json", dump(to_json(st)));
    out.outputs.add("scaling.csv", detail::to_text([&](std::ostream& os) { write_scaling_csv(os, st); }));
    svg::Series pts{{}, {}, "log p (estimate)", "#1f77b4", true};
    svg::Series lo{{}, {}, "Wilson interval", "#9ecae1", true};
    for (const auto& q : st.points) {
      pts.x.push_back(double(q.n));
      pts.y.push_back(q.log_p);
      lo.x.insert(lo.x.end(), {double(q.n), double(q.n)});
      lo.y.insert(lo.y.end(), {q.lo > 0 ? std::log(q.lo) : NAN, std::log(q.hi)});
    }
    std::vector<svg::Series> series{lo, pts};
    const double n0 = double(p.n_list.front()), n1 = double(p.n_list.back());
    double anchor = NAN;
    if (st.fitted) {
      series.push_back({{n0, n1}, {st.fit_intercept + st.fit_slope * n0, st.fit_intercept + st.fit_slope * n1},
                        "least-squares fit", "#2ca02c", false});
      anchor = st.fit_intercept;
    } else {
      for (const auto& q : st.points)
        if (std::isfinite(q.log_p)) {
          anchor = q.log_p - st.reference_slope * double(q.n);
          break;
        }
    }
    if (std::isfinite(anchor)) {
      series.push_back({{n0, n1}, {anchor + st.reference_slope * n0, anchor + st.reference_slope * n1},
                        "reference slope -(delta - |lambda| eps^2)", "#d62728", false, true});
    }
    out.outputs.add("scaling.svg", svg::render({"Escape probability", "N", "log p", series}));
    std::ostringstream line;
    if (st.fitted) {
      line << "scaling: slope = " << format_real(st.fit_slope) << " +/- " << format_real(st.slope_stderr)
           << ", R^2 = " << format_real(st.r_squared) << ", reference = " << format_real(st.reference_slope)
           << ", slope check " << (st.slope_check ? "passed" : "failed");
    } else {
      line << "scaling: too few N values with enough hits; bound-only study written";
    }
    out.summary = line.str();
    return out;
  });
}

// ---- flow

inline CommandResult cmd_flow(const RunConfig& c, const RunOptions&) {
  using detail::require;
  const FlowConfig& f = c.flow;
  const TorusGrid g = detail::make_grid(c.grid.L, c.grid.d, c.grid.n, "grid");
  const FreeEnergyModel model = detail::build_model(c, g, c.model.beta);
  const SolverOptions sopt = detail::solver_options(c);
  require(f.T > 0.0 && std::isfinite(f.T), "flow.T must be positive");
  require(f.dt >= 0.0 && std::isfinite(f.dt), "flow.dt must be nonnegative");
  require(f.record_every >= 1, "flow.record_every must be at least 1");
  require(f.seed_amplitude >= 0.0 && f.seed_amplitude < 1.0, "flow.seed_amplitude must lie in [0, 1)");
  const detail::StateSpec init = detail::parse_state(f.initial, g, "flow.initial");

  return detail::solver_stage([&] {
    const GridDensity mu0 = detail::realise(init, model, sopt, f.seed_amplitude, false);
    const FlowTrajectory t = evolve(model, mu0, f.T, f.dt, f.record_every);
    CommandResult out;
    out.outputs.add("trajectory.csv", detail::to_text([&](std::ostream& os) { write_trajectory_csv(os, t); }));
    out.outputs.add("final.csv", detail::grid_csv(t.states.back().function()));
    if (f.write_frames) {
      out.outputs.add("frames.csv", detail::to_text([&](std::ostream& os) { write_frames_csv(os, t.times, t.states); }));
    }
    Json j;
    j["T"] = f.T;
    j["dt"] = f.dt == 0.0 ? default_time_step(model) : f.dt;
    j["frames"] = t.times.size();
    j["initial_energy"] = t.energies.front();
    j["final_energy"] = t.energies.back();
    j["final_dissipation"] = t.dissipations.back();
    j["final_residual"] = fixed_point_residual(model, t.states.back());
    out.outputs.add("flow.json", dump(j));
    out.outputs.add("energy.svg", svg::render({"Free energy along the flow", "t", "I",
                                               {{t.times, t.energies, "I(t)", "#1f77b4", false}}}));
    out.summary = "flow: I(0) = " + format_real(t.energies.front()) + ", I(T) = " + format_real(t.energies.back()) +
                  ", dissipation(T) = " + format_real(t.dissipations.back());
    return out;
  });
}

// ---- solve

inline CommandResult cmd_solve(const RunConfig& c, const RunOptions&) {
  const TorusGrid g = detail::make_grid(c.grid.L, c.grid.d, c.grid.n, "grid");
  const FreeEnergyModel model = detail::build_model(c, g, c.model.beta);
  const SolverOptions sopt = detail::solver_options(c);
  const detail::StateSpec init = detail::parse_state(c.solver.initial, g, "solver.initial");

  return detail::solver_stage([&] {
    const GridDensity mu0 = detail::realise(init, model, sopt, c.flow.seed_amplitude, false);
    const BranchPoint p = solve_stationary(model, mu0, sopt);
    CommandResult out;
    out.outputs.add("solution.csv", detail::grid_csv(p.density.function()));
    Json j;
    j["beta"] = p.beta;
    j["residual"] = p.residual;
    j["iterations"] = p.iterations;
    j["converged"] = p.converged;
    j["order_parameter"] = p.order_parameter;
    j["free_energy"] = free_energy(model, p.density);
    j["free_energy_gap"] = p.free_energy_gap;
    j["tv_distance"] = p.tv_distance;
    out.outputs.add("solve.json", dump(j));
    out.summary = "solve: residual = " + format_real(p.residual) + ", order parameter = " +
                  format_real(p.order_parameter) + ", free energy gap = " + format_real(p.free_energy_gap);
    return out;
  });
}

// ---- action

inline CommandResult cmd_action(const RunConfig& c, const RunOptions&) {
  using detail::require;
  const TorusGrid g = detail::make_grid(c.grid.L, c.grid.d, c.grid.n, "grid");
  require(g.dim() == 1, "action needs d = 1");
  const FreeEnergyModel model = detail::build_model(c, g, c.model.beta);
  require(!c.action.frames.empty(), "action.frames is required");
  require(detail::file_exists(c.action.frames), "action.frames: cannot open '" + c.action.frames + "'");
  FrameSeries fs;
  try {
    std::ifstream is(c.action.frames);
    fs = read_frames_csv(is, g.length(), g.dim());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("action.frames: ") + e.what());
  }
  require(fs.frames.size() >= 3, "action.frames needs at least three frames");
  require(fs.frames.front().grid() == g, "action.frames is not on the configured grid");
  double dt = c.action.dt;
  require(dt >= 0.0 && std::isfinite(dt), "action.dt must be nonnegative");
  if (dt == 0.0) {
    dt = (fs.times.back() - fs.times.front()) / double(fs.times.size() - 1);
    for (std::size_t i = 1; i < fs.times.size(); ++i)
      require(std::abs(fs.times[i] - fs.times[i - 1] - dt) <= 1e-9 * std::max(1.0, std::abs(dt)),
              "action.frames are not equally spaced in t; set action.dt");
    require(dt > 0.0, "action.frames times must increase");
  }

  return detail::solver_stage([&] {
    const double s = path_action(model, fs.frames, dt);
    CommandResult out;
    Json j;
    j["action"] = s;
    j["frames"] = fs.frames.size();
    j["dt"] = dt;
    j["energy_start"] = free_energy(model, fs.frames.front());
    j["energy_end"] = free_energy(model, fs.frames.back());
    out.outputs.add("action.json", dump(j));
    out.summary = "action: S = " + format_real(s);
    return out;
  });
}

// ---- driver

inline CommandResult dispatch(const RunConfig& c, const RunOptions& o) {
  if (o.command == "classify") return cmd_classify(c, o);
  if (o.command == "barrier") return cmd_barrier(c, o);
  if (o.command == "scaling") return cmd_scaling(c, o);
  if (o.command == "flow") return cmd_flow(c, o);
  if (o.command == "solve") return cmd_solve(c, o);
  if (o.command == "action") return cmd_action(c, o);
  throw ConfigError("unknown command '" + o.command + "'");
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Runs one command end to end: parse and validate, compute, then write outputs and manifest.json.
inline int execute(const RunOptions& o, std::ostream& out, std::ostream& err) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  RunConfig cfg;
  CommandResult res;
  std::string dir;
  double setup_seconds = 0.0;
  try {
    std::string text;
    if (!o.config_path.empty()) {
      std::ifstream is(o.config_path, std::ios::binary);
      if (!is) throw ConfigError("cannot open config '" + o.config_path + "'");
      text.assign(std::istreambuf_iterator<char>(is), {});
    }
    cfg = parse_config(text, o.config_path.empty() ? "defaults" : o.config_path, o.seed ? &*o.seed : nullptr);
    dir = o.out.empty() ? cfg.output_dir : o.out;
    detail::require(!dir.empty(), "output directory must not be empty");
    res = dispatch(cfg, o);
  } catch (const Error& e) {
    err << "mckv: config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const auto t1 = clock::now();
  setup_seconds = std::chrono::duration<double>(t1 - t0).count();

  try {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Json files = Json::array();
    for (const auto& [name, text] : res.outputs.files) {
      const fs::path path = fs::path(dir) / name;
      fs::create_directories(path.parent_path());
      mckv::detail::write_text(path.string(), text);
      files.push_back(name);
    }
    Json m;
    m["tool"] = "mckv";
    m["version"] = kVersion;
    m["command"] = o.command;
    m["config_path"] = o.config_path;
    m["config_hash"] = hex64(fnv1a(cfg.canonical));
    m["master_seed"] = cfg.particles.master_seed;
    m["threads"] = o.threads;
    m["force"] = o.force;
    m["exit_code"] = res.code;
    m["outputs"] = files;
    m["timings"] = {{"wall_seconds", std::chrono::duration<double>(clock::now() - t0).count()},
                    {"setup_and_compute_seconds", setup_seconds}};
    mckv::detail::write_text((fs::path(dir) / "manifest.json").string(), dump(m));
  } catch (const std::exception& e) {
    err << "mckv: cannot write outputs: " << e.what() << '\n';
    return kExitSolver;
  }
  (res.code == kExitOk ? out : err) << res.summary << '\n';
  return res.code;
}

/// Command-line entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Mean-field transitions, barriers and escape statistics on the flat torus", "mckv"};
  app.fallthrough();
  RunOptions o;
  bool print_defaults = false;
  app.add_option("--config", o.config_path, "TOML configuration file");
  app.add_option("--out", o.out, "output directory (overrides output.dir)");
  app.add_option("--threads", o.threads, "worker threads")->check(CLI::Range(1u, 4096u));
  app.add_option("--seed", o.seed, "master seed (overrides particles.master_seed)");
  app.add_flag("--force", o.force, "search for a barrier even if an endpoint is not a fixed point");
  app.add_flag("--print-defaults", print_defaults, "print the default configuration and exit");
  app.set_version_flag("--version", std::string(kVersion));
  const std::vector<std::pair<std::string, std::string>> commands{
      {"classify", "existence, bound and character of the phase transition"},
      {"barrier", "mountain-pass barrier between two stationary states"},
      {"scaling", "escape-probability scaling study of the particle system"},
      {"flow", "integrate the mean-field gradient flow"},
      {"solve", "solve the self-consistency equation"},
      {"action", "rate functional of a recorded path"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);
  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    std::ostringstream help;
    const int code = app.exit(e, help, help);
    out << help.str();
    return code;
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    app.exit(e, msg, msg);
    err << msg.str();
    return kExitConfig;
  }
  if (print_defaults) {
    out << kDefaultConfig;
    return kExitOk;
  }
  const auto chosen = app.get_subcommands();
  if (chosen.empty()) {
    err << "mckv: a command is required; see --help\n";
    return kExitConfig;
  }
  o.command = chosen.front()->get_name();
  return execute(o, out, err);
}

}  // namespace mckv::cli
