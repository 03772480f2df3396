#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "scarkit/analysis.hpp"
#include "scarkit/basis.hpp"
#include "scarkit/dynamics.hpp"
#include "scarkit/model_spec.hpp"
#include "scarkit/operators.hpp"
#include "scarkit/spectra.hpp"

namespace scarkit {

enum class Task { basis, spectrum, evolve, decay, cscan, leakage, ensemble, ethfit };

inline constexpr std::array<const char*, 8> kTaskNames{"basis", "spectrum", "evolve", "decay", "cscan", "leakage", "ensemble", "ethfit"};

inline const char* to_string(Task t) { return kTaskNames[static_cast<std::size_t>(t)]; }

inline Task task_from_string(const std::string& s) {
  for (std::size_t k = 0; k < kTaskNames.size(); ++k)
    if (s == kTaskNames[k]) return static_cast<Task>(k);
  std::string all;
  for (const char* n : kTaskNames) all += std::string(all.empty() ? "" : ", ") + n;
  throw ValidationError("task: unknown task '" + s + "' (valid tasks: " + all + ")");
}

/// Initial state: explicit product-state labels, or the model's special state
/// (|j,...,j> for spin chains; all-b_j logical sites for hd-pxp, i.e. the
/// physical |j,-j,...,j,-j>).
struct StateSpec {
  std::optional<std::vector<int>> labels;
  std::string describe() const {
    if (!labels) return "special";
    std::string s;
    for (int l : *labels) s += std::to_string(l);
    return "labels:" + s;
  }
};

/// Everything one task invocation needs. Field names match the flat JSON keys.
struct RunConfig {
  Task task{Task::basis};
  ModelSpec model;
  std::optional<Recipe> recipe;

  // time grid and integration
  double t_end{10.0};
  double dt_out{0.1};
  double dt{0.0};  // 0: dynamics default
  LiouvillianKind kind{LiouvillianKind::Positive};
  std::string method{"unitary"};  // evolve: unitary | master | trajectories
  int n_traj{500};
  std::optional<std::uint64_t> seed;
  bool share_prefix{true};

  StateSpec initial_state;
  std::vector<StateSpec> initial_states;  // leakage

  // analysis
  DecayEngine engine{DecayEngine::nojump};
  std::vector<double> c_list;
  std::optional<std::vector<Index>> indices;  // decay / cscan eigenstate set
  Index window_count{9};
  double fit_window{0.1};
  std::optional<double> fit_t_max;  // leakage slope fit horizon

  // spectra
  std::vector<ObservableSpec> observables;
  DegeneracyPolicy degeneracy{DegeneracyPolicy::group_average};
  ScarPolicy scars;
  double dos_bin{0.1};
  std::optional<std::array<double, 2>> energy_window;

  // thermo
  std::vector<int> subsystem{1, 2};
  std::string targets{"scars"};  // scars | all | list (see target_indices)
  std::vector<Index> target_indices;
  bool time_average{false};

  // plumbing
  std::string output{"out"};
  std::string cache_dir{"cache"};
  bool plots{true};
  int threads{1};
  std::int64_t basis_cap{kDefaultBasisCap};
  Index diag_cap{kDefaultDiagCap};
  std::int64_t dm_cap{kDefaultDmCap};
  std::int64_t full_cap{kDefaultFullCap};

  TimeGrid grid() const { return TimeGrid{t_end, dt_out}; }
  bool stochastic() const {
    return (task == Task::evolve && method == "trajectories") || (task == Task::leakage && method != "master") ||
           ((task == Task::decay || task == Task::cscan) && engine == DecayEngine::trajectories);
  }
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline double num(const nlohmann::json& j, const char* field) {
  if (!j.is_number()) throw ValidationError(std::string(field) + ": expected a number");
  return j.get<double>();
}

inline std::int64_t integer(const nlohmann::json& j, const char* field) {
  if (!j.is_number_integer()) throw ValidationError(std::string(field) + ": expected an integer");
  return j.get<std::int64_t>();
}

inline std::string str(const nlohmann::json& j, const char* field) {
  if (!j.is_string()) throw ValidationError(std::string(field) + ": expected a string");
  return j.get<std::string>();
}

inline bool boolean(const nlohmann::json& j, const char* field) {
  if (!j.is_boolean()) throw ValidationError(std::string(field) + ": expected true or false");
  return j.get<bool>();
}

inline StateSpec state_spec(const nlohmann::json& j, const char* field) {
  StateSpec s;
  if (j.is_string()) {
    if (j.get<std::string>() != "special") throw ValidationError(std::string(field) + ": expected \"special\" or a label list");
    return s;
  }
  if (!j.is_array()) throw ValidationError(std::string(field) + ": expected \"special\" or a label list");
  std::vector<int> l;
  for (const auto& x : j) l.push_back(static_cast<int>(integer(x, field)));
  s.labels = l;
  return s;
}

/// "O2", "O1@3" or {"name": ..., "site": ..., "matrix": ...}.
inline ObservableSpec observable_spec(const nlohmann::json& j) {
  ObservableSpec o;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    const auto at = s.find('@');
    o.name = s.substr(0, at);
    if (at != std::string::npos) {
      try {
        o.site = std::stoi(s.substr(at + 1));
      } catch (const std::exception&) {
        throw ValidationError("observables: bad site in '" + s + "'");
      }
    }
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "name" && it.key() != "site" && it.key() != "matrix")
        throw ValidationError("observables: unknown field '" + it.key() + "'");
    if (!j.contains("name")) throw ValidationError("observables: missing name");
    o.name = str(j["name"], "observables.name");
    if (j.contains("site")) o.site = static_cast<int>(integer(j["site"], "observables.site"));
    if (j.contains("matrix")) o.matrix = matrix_from_json(j["matrix"], "observables.matrix");
  } else {
    throw ValidationError("observables: expected names or objects");
  }
  if (o.site < 0) throw ValidationError("observables: site must be >= 1 (0 = site-averaged)");
  return o;
}

}  // namespace detail

/// Validates and fills a RunConfig from a parsed JSON object.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known{
      "task", "family", "j", "n_sites", "boundary", "c", "local_hamiltonian", "bond_states", "recipe", "t_end", "dt_out", "dt",
      "kind", "method", "n_traj", "seed", "share_prefix", "initial_state", "initial_states", "engine", "c_list", "indices",
      "window_count", "fit_window", "fit_t_max", "observables", "degeneracy", "scar_floor", "scar_window_decades",
      "scar_indices", "scar_nondegenerate_only", "dos_bin", "energy_window", "subsystem", "targets", "time_average", "output",
      "cache_dir", "plots", "threads", "basis_cap", "diag_cap", "dm_cap", "full_cap"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ValidationError(it.key() + ": unknown field");

  RunConfig c;
  if (!j.contains("task")) throw ValidationError("task: missing");
  c.task = task_from_string(detail::str(j["task"], "task"));
  nlohmann::json mj = nlohmann::json::object();
  for (const char* k : {"family", "j", "n_sites", "boundary", "c", "local_hamiltonian", "bond_states"})
    if (j.contains(k)) mj[k] = j[k];
  c.model = model_spec_from_json(mj);

  if (j.contains("recipe")) c.recipe = recipe_from_string(detail::str(j["recipe"], "recipe"));
  if (j.contains("t_end")) c.t_end = detail::num(j["t_end"], "t_end");
  if (j.contains("dt_out")) c.dt_out = detail::num(j["dt_out"], "dt_out");
  if (j.contains("dt")) c.dt = detail::num(j["dt"], "dt");
  if (c.dt < 0.0) throw ValidationError("dt: must be positive (or 0 for the default rule)");
  if (j.contains("kind")) c.kind = kind_from_string(detail::str(j["kind"], "kind"));
  if (j.contains("method")) {
    c.method = detail::str(j["method"], "method");
    if (c.method != "unitary" && c.method != "master" && c.method != "trajectories")
      throw ValidationError("method: unknown value '" + c.method + "' (expected unitary, master or trajectories)");
  }
  if (j.contains("n_traj")) c.n_traj = static_cast<int>(detail::integer(j["n_traj"], "n_traj"));
  if (c.n_traj < 1) throw ValidationError("n_traj: must be >= 1");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0))
      throw ValidationError("seed: expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("share_prefix")) c.share_prefix = detail::boolean(j["share_prefix"], "share_prefix");
  if (j.contains("initial_state")) c.initial_state = detail::state_spec(j["initial_state"], "initial_state");
  if (j.contains("initial_states")) {
    if (!j["initial_states"].is_array()) throw ValidationError("initial_states: expected a list");
    for (const auto& s : j["initial_states"]) c.initial_states.push_back(detail::state_spec(s, "initial_states"));
  }
  if (j.contains("engine")) c.engine = decay_engine_from_string(detail::str(j["engine"], "engine"));
  if (j.contains("c_list")) {
    if (!j["c_list"].is_array()) throw ValidationError("c_list: expected a list of numbers");
    for (const auto& x : j["c_list"]) c.c_list.push_back(detail::num(x, "c_list"));
  }
  if (j.contains("indices")) {
    if (!j["indices"].is_array()) throw ValidationError("indices: expected a list of eigenstate indices");
    std::vector<Index> v;
    for (const auto& x : j["indices"]) v.push_back(detail::integer(x, "indices"));
    c.indices = v;
  }
  if (j.contains("window_count")) c.window_count = detail::integer(j["window_count"], "window_count");
  if (c.window_count < 2) throw ValidationError("window_count: must be >= 2");
  if (j.contains("fit_window")) c.fit_window = detail::num(j["fit_window"], "fit_window");
  if (!(c.fit_window > 0.0 && c.fit_window < 1.0)) throw ValidationError("fit_window: must lie in (0, 1)");
  if (j.contains("fit_t_max")) c.fit_t_max = detail::num(j["fit_t_max"], "fit_t_max");
  if (j.contains("observables")) {
    if (!j["observables"].is_array()) throw ValidationError("observables: expected a list");
    for (const auto& o : j["observables"]) c.observables.push_back(detail::observable_spec(o));
  }
  if (j.contains("degeneracy")) {
    const std::string d = detail::str(j["degeneracy"], "degeneracy");
    if (d == "group-average") c.degeneracy = DegeneracyPolicy::group_average;
    else if (d == "raw") c.degeneracy = DegeneracyPolicy::raw;
    else throw ValidationError("degeneracy: unknown value '" + d + "' (expected group-average or raw)");
  }
  if (j.contains("scar_floor")) c.scars.floor = detail::num(j["scar_floor"], "scar_floor");
  if (j.contains("scar_window_decades")) c.scars.window_decades = detail::num(j["scar_window_decades"], "scar_window_decades");
  if (j.contains("scar_nondegenerate_only"))
    c.scars.nondegenerate_only = detail::boolean(j["scar_nondegenerate_only"], "scar_nondegenerate_only");
  if (j.contains("scar_indices")) {
    if (!j["scar_indices"].is_array()) throw ValidationError("scar_indices: expected a list");
    std::vector<Index> v;
    for (const auto& x : j["scar_indices"]) v.push_back(detail::integer(x, "scar_indices"));
    c.scars.explicit_list = v;
  }
  if (j.contains("dos_bin")) c.dos_bin = detail::num(j["dos_bin"], "dos_bin");
  if (!(c.dos_bin > 0.0)) throw ValidationError("dos_bin: must be positive");
  if (j.contains("energy_window")) {
    const auto& w = j["energy_window"];
    if (!w.is_array() || w.size() != 2) throw ValidationError("energy_window: expected [lo, hi]");
    c.energy_window = std::array<double, 2>{detail::num(w[0], "energy_window"), detail::num(w[1], "energy_window")};
    if (!((*c.energy_window)[0] < (*c.energy_window)[1])) throw ValidationError("energy_window: lo must be below hi");
  }
  if (j.contains("subsystem")) {
    if (!j["subsystem"].is_array() || j["subsystem"].empty()) throw ValidationError("subsystem: expected a non-empty list of sites");
    c.subsystem.clear();
    for (const auto& x : j["subsystem"]) c.subsystem.push_back(static_cast<int>(detail::integer(x, "subsystem")));
  }
  if (j.contains("targets")) {
    const auto& t = j["targets"];
    if (t.is_string()) {
      c.targets = t.get<std::string>();
      if (c.targets != "scars" && c.targets != "all") throw ValidationError("targets: expected \"scars\", \"all\" or an index list");
    } else if (t.is_array()) {
      c.targets = "list";
      for (const auto& x : t) c.target_indices.push_back(detail::integer(x, "targets"));
    } else {
      throw ValidationError("targets: expected \"scars\", \"all\" or an index list");
    }
  }
  if (j.contains("time_average")) c.time_average = detail::boolean(j["time_average"], "time_average");
  if (j.contains("output")) c.output = detail::str(j["output"], "output");
  if (j.contains("cache_dir")) c.cache_dir = detail::str(j["cache_dir"], "cache_dir");
  if (j.contains("plots")) c.plots = detail::boolean(j["plots"], "plots");
  if (j.contains("threads")) c.threads = static_cast<int>(detail::integer(j["threads"], "threads"));
  if (c.threads < 1) throw ValidationError("threads: must be >= 1");
  if (j.contains("basis_cap")) c.basis_cap = detail::integer(j["basis_cap"], "basis_cap");
  if (j.contains("diag_cap")) c.diag_cap = detail::integer(j["diag_cap"], "diag_cap");
  if (j.contains("dm_cap")) c.dm_cap = detail::integer(j["dm_cap"], "dm_cap");
  if (j.contains("full_cap")) c.full_cap = detail::integer(j["full_cap"], "full_cap");

  // task completeness
  c.grid().validate();
  if (c.task == Task::cscan && c.c_list.size() < 2) throw ValidationError("c_list: cscan needs at least two values");
  for (double x : c.c_list)
    if (!(x > 0.0)) throw ValidationError("c_list: every c must be positive");
  if (c.task == Task::ensemble || c.task == Task::ethfit) {
    if (c.observables.empty()) c.observables.push_back(ObservableSpec{c.model.family == Family::hd_pxp ? "hd-O1" : "O2", 0, {}});
  }
  if (c.task == Task::leakage && !j.contains("kind")) c.kind = LiouvillianKind::LindbladPrime;
  if (c.task == Task::leakage && !j.contains("method")) c.method = "trajectories";
  if (c.task == Task::leakage && c.method == "unitary") throw ValidationError("method: leakage runs use trajectories or master");
  if (c.task == Task::leakage && c.initial_states.empty()) c.initial_states.push_back(c.initial_state);
  return c;
}

/// Reads a JSON config file without validating it. Parse errors carry line/column.
inline nlohmann::json read_config_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    std::string msg = e.what();
    const auto p = msg.find("syntax error");
    throw ValidationError("config " + path + ": parse error at " + detail::line_col(text, at) + ": " +
                          (p == std::string::npos ? msg : msg.substr(p)));
  }
  return j;
}

inline RunConfig parse_config(const std::string& path) { return config_from_json(read_config_json(path)); }

}  // namespace scarkit
