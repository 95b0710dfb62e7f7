#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "mckv/error.hpp"

namespace mckv::cli {

/// Invalid or unusable configuration; always maps to exit code 1 and is raised before any output.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Every accepted key with its default. Printed verbatim by --print-defaults.
inline constexpr std::string_view kDefaultConfig = R"toml(# mckv configuration; every key is optional.

[potential]
kind = "neg_cosine"        # neg_cosine | resonant | samples_file | zero
modes = [1, 2]             # resonant: wavenumbers k of weight * cos(2 pi k x / L)
weights = [-1.0, -1.0]     # resonant: one weight per mode
amplitude = 1.0            # overall factor applied to W
file = ""                  # samples_file: grid-function CSV on the configured grid

[grid]
L = 6.283185307179586
d = 1
n = 256

[model]
beta = 4.0
beta_grid = []             # classify; empty selects beta_grid_points over [0.5, 1.5] x beta_sharp
beta_grid_points = 101

[solver]
tol = 1e-10
max_iter = 50000
damping = 0.5
cold_start = false
initial = "clustered"      # solve: uniform | seeded | clustered | path to grid-function CSV

[classify]
resonance_cutoff = 16
tv_jump_threshold = 0.05

[string]
beads = 17
steps = 2000
dt = 0.0                   # 0 selects 0.1 h^2 beta
parametrisation = "L2"     # L2 | Quantile
saddle_tol = 1e-8

[endpoints]
a = "uniform"              # uniform | clustered | path to grid-function CSV
b = "clustered"
classify_report = ""       # when set, beta is the beta_c of this classify report

[particles]
N_list = [8, 16, 32, 64]
T = 1.0
dt = 0.02
epsilon = 0.6
replicas = 20000
master_seed = 20240611
bandwidth = 2
membership_n = 16          # grid on which W2 membership in the target ball is judged
barrier_report = ""        # required; supplies delta_reference and beta (model.beta is ignored)
target = "clustered"       # clustered | barrier (last bead of the barrier report) | path to CSV

[flow]
T = 10.0
dt = 0.0                   # 0 selects 0.1 h^2 beta
record_every = 100
initial = "seeded"         # uniform | seeded | clustered | path to grid-function CSV
seed_amplitude = 0.1
write_frames = false

[action]
frames = ""                # frames CSV as written by `flow` with write_frames = true
dt = 0.0                   # 0 reads the spacing of the t column

[output]
dir = "out"
)toml";

struct PotentialConfig {
  std::string kind;
  std::vector<int> modes;
  std::vector<double> weights;
  double amplitude = 1.0;
  std::string file;
};

struct GridConfig {
  double L = 0.0;
  int d = 1;
  int n = 0;
};

struct ModelConfig {
  double beta = 0.0;
  std::vector<double> beta_grid;
  int beta_grid_points = 0;
};

struct SolverConfig {
  double tol = 0.0;
  int max_iter = 0;
  double damping = 0.0;
  bool cold_start = false;
  std::string initial;
};

struct ClassifyConfig {
  int resonance_cutoff = 16;
  double tv_jump_threshold = 0.05;
};

struct StringConfig {
  int beads = 0;
  int steps = 0;
  double dt = 0.0;
  std::string parametrisation;
  double saddle_tol = 0.0;
};

struct EndpointsConfig {
  std::string a, b, classify_report;
};

struct ParticlesConfig {
  std::vector<std::size_t> n_list;
  double T = 0.0, dt = 0.0, epsilon = 0.0;
  std::size_t replicas = 0;
  std::uint64_t master_seed = 0;
  int bandwidth = 0;
  int membership_n = 0;
  std::string barrier_report, target;
};

struct FlowConfig {
  double T = 0.0, dt = 0.0;
  int record_every = 1;
  std::string initial;
  double seed_amplitude = 0.0;
  bool write_frames = false;
};

struct ActionConfig {
  std::string frames;
  double dt = 0.0;
};

struct RunConfig {
  PotentialConfig potential;
  GridConfig grid;
  ModelConfig model;
  SolverConfig solver;
  ClassifyConfig classify;
  StringConfig string;
  EndpointsConfig endpoints;
  ParticlesConfig particles;
  FlowConfig flow;
  ActionConfig action;
  std::string output_dir;
  /// Canonical TOML of the effective configuration (defaults merged with the file).
  std::string canonical;
};

namespace detail {

inline toml::table parse_toml(std::string_view text, std::string_view source) {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at " << source << ':' << e.source().begin.line;
    throw ConfigError(os.str());
  }
}

inline bool is_number(const toml::node& n) { return n.is_integer() || n.is_floating_point(); }

/// A user value may replace a default of the same kind; integers are accepted for reals and
/// arrays only need numeric elements (an empty default array takes any numeric array).
inline bool compatible(const toml::node& def, const toml::node& user) {
  if (def.is_floating_point()) return is_number(user);
  if (def.is_integer()) return user.is_integer();
  if (def.is_string()) return user.is_string();
  if (def.is_boolean()) return user.is_boolean();
  if (def.is_array()) {
    if (!user.is_array()) return false;
    for (const auto& e : *user.as_array())
      if (!is_number(e)) return false;
    return true;
  }
  return false;
}

/// Overlays `user` onto `defaults`, rejecting unknown tables, unknown keys and type changes.
inline void merge_checked(toml::table& defaults, const toml::table& user) {
  for (const auto& [section, node] : user) {
    toml::table* target = defaults[section.str()].as_table();
    if (!target) throw ConfigError("unknown table [" + std::string(section.str()) + "]");
    const toml::table* src = node.as_table();
    if (!src) throw ConfigError("'" + std::string(section.str()) + "' must be a table");
    for (const auto& [key, value] : *src) {
      const std::string name = std::string(section.str()) + "." + std::string(key.str());
      const toml::node* def = target->get(key.str());
      if (!def) throw ConfigError("unknown key '" + name + "'");
      if (!compatible(*def, value)) throw ConfigError("key '" + name + "' has the wrong type");
      if (def->is_floating_point() && value.is_integer()) {
        target->insert_or_assign(key.str(), static_cast<double>(value.as_integer()->get()));
      } else {
        target->insert_or_assign(key.str(), value);
      }
    }
  }
}

class Reader {
 public:
  explicit Reader(const toml::table& t) : t_(t) {}

  double real(std::string_view s, std::string_view k) const { return *t_[s][k].value<double>(); }
  std::int64_t integer(std::string_view s, std::string_view k) const { return *t_[s][k].value<std::int64_t>(); }
  int small_int(std::string_view s, std::string_view k) const {
    const std::int64_t v = integer(s, k);
    if (v < -(1ll << 31) || v > (1ll << 31) - 1) throw ConfigError(std::string(s) + "." + std::string(k) + " is out of range");
    return static_cast<int>(v);
  }
  std::size_t count(std::string_view s, std::string_view k) const {
    const std::int64_t v = integer(s, k);
    if (v < 0) throw ConfigError(std::string(s) + "." + std::string(k) + " must be nonnegative");
    return static_cast<std::size_t>(v);
  }
  std::string text(std::string_view s, std::string_view k) const { return *t_[s][k].value<std::string>(); }
  bool flag(std::string_view s, std::string_view k) const { return *t_[s][k].value<bool>(); }
  std::vector<double> reals(std::string_view s, std::string_view k) const {
    std::vector<double> out;
    for (const auto& e : *t_[s][k].as_array()) out.push_back(*e.value<double>());
    return out;
  }
  std::vector<std::int64_t> integers(std::string_view s, std::string_view k) const {
    std::vector<std::int64_t> out;
    for (const auto& e : *t_[s][k].as_array()) {
      if (!e.is_integer()) throw ConfigError(std::string(s) + "." + std::string(k) + " must hold integers");
      out.push_back(*e.value<std::int64_t>());
    }
    return out;
  }

 private:
  const toml::table& t_;
};

}  // namespace detail

/// Parses configuration text (empty text gives the defaults). `seed_override` replaces
/// particles.master_seed before the canonical form is taken.
inline RunConfig parse_config(std::string_view text, std::string_view source = "config",
                              const std::uint64_t* seed_override = nullptr) {
  toml::table merged = detail::parse_toml(kDefaultConfig, "defaults");
  detail::merge_checked(merged, detail::parse_toml(text, source));
  if (seed_override) {
    // TOML integers are signed; larger seeds are kept bit-for-bit
    merged["particles"].as_table()->insert_or_assign("master_seed", static_cast<std::int64_t>(*seed_override));
  }
  const detail::Reader r(merged);
  RunConfig c;
  c.potential.kind = r.text("potential", "kind");
  for (std::int64_t m : r.integers("potential", "modes")) {
    if (m < 1 || m > 1'000'000) throw ConfigError("potential.modes must be positive wavenumbers");
    c.potential.modes.push_back(static_cast<int>(m));
  }
  c.potential.weights = r.reals("potential", "weights");
  c.potential.amplitude = r.real("potential", "amplitude");
  c.potential.file = r.text("potential", "file");

  c.grid.L = r.real("grid", "L");
  c.grid.d = r.small_int("grid", "d");
  c.grid.n = r.small_int("grid", "n");

  c.model.beta = r.real("model", "beta");
  c.model.beta_grid = r.reals("model", "beta_grid");
  c.model.beta_grid_points = r.small_int("model", "beta_grid_points");

  c.solver.tol = r.real("solver", "tol");
  c.solver.max_iter = r.small_int("solver", "max_iter");
  c.solver.damping = r.real("solver", "damping");
  c.solver.cold_start = r.flag("solver", "cold_start");
  c.solver.initial = r.text("solver", "initial");

  c.classify.resonance_cutoff = r.small_int("classify", "resonance_cutoff");
  c.classify.tv_jump_threshold = r.real("classify", "tv_jump_threshold");

  c.string.beads = r.small_int("string", "beads");
  c.string.steps = r.small_int("string", "steps");
  c.string.dt = r.real("string", "dt");
  c.string.parametrisation = r.text("string", "parametrisation");
  c.string.saddle_tol = r.real("string", "saddle_tol");

  c.endpoints.a = r.text("endpoints", "a");
  c.endpoints.b = r.text("endpoints", "b");
  c.endpoints.classify_report = r.text("endpoints", "classify_report");

  for (std::int64_t n : r.integers("particles", "N_list")) {
    if (n < 1) throw ConfigError("particles.N_list entries must be positive");
    c.particles.n_list.push_back(static_cast<std::size_t>(n));
  }
  c.particles.T = r.real("particles", "T");
  c.particles.dt = r.real("particles", "dt");
  c.particles.epsilon = r.real("particles", "epsilon");
  c.particles.replicas = r.count("particles", "replicas");
  c.particles.master_seed = static_cast<std::uint64_t>(r.integer("particles", "master_seed"));
  c.particles.bandwidth = r.small_int("particles", "bandwidth");
  c.particles.membership_n = r.small_int("particles", "membership_n");
  c.particles.barrier_report = r.text("particles", "barrier_report");
  c.particles.target = r.text("particles", "target");

  c.flow.T = r.real("flow", "T");
  c.flow.dt = r.real("flow", "dt");
  c.flow.record_every = r.small_int("flow", "record_every");
  c.flow.initial = r.text("flow", "initial");
  c.flow.seed_amplitude = r.real("flow", "seed_amplitude");
  c.flow.write_frames = r.flag("flow", "write_frames");

  c.action.frames = r.text("action", "frames");
  c.action.dt = r.real("action", "dt");

  c.output_dir = r.text("output", "dir");

  std::ostringstream os;
  os << merged << '\n';
  c.canonical = os.str();
  return c;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mckv::cli
