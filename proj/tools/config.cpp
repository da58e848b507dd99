#include "config.hpp"

#include <algorithm>
#include <initializer_list>
#include <span>

#include "dhazard/error.hpp"
#include "json.hpp"

namespace dhazard::cli {

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> known) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(join(path, key) + ": unknown setting");
    }
  }
}

template <class T>
void read(const YAML::Node& parent, const char* key, T& target, const std::string& path) {
  if (!parent) return;
  const YAML::Node node = parent[key];
  if (!node || node.IsNull()) return;
  try {
    target = node.as<T>();
  } catch (const YAML::Exception&) {
    const std::string shown = node.IsScalar() ? " '" + node.Scalar() + "'" : "";
    throw ConfigError(join(path, key) + ": invalid value" + shown);
  }
}

std::vector<std::string> read_names(const YAML::Node& node, const std::string& path) {
  std::vector<std::string> out;
  if (!node || node.IsNull()) return out;
  if (node.IsScalar()) return {node.as<std::string>()};
  if (!node.IsSequence()) throw ConfigError(path + ": expected a list of names");
  for (const auto& v : node) out.push_back(v.as<std::string>());
  return out;
}

void read_engine(const YAML::Node& n, EngineConfig& e) {
  check_keys(n, "engine",
             {"boost_iterations", "step", "refit_iterations", "burn_in", "batch_rows", "seed", "select", "rule",
              "stop_tolerance", "stop_patience", "tau"});
  read(n, "boost_iterations", e.boost_iterations, "engine");
  read(n, "step", e.step, "engine");
  read(n, "refit_iterations", e.refit_iterations, "engine");
  read(n, "burn_in", e.burn_in, "engine");
  read(n, "batch_rows", e.batch_rows, "engine");
  read(n, "seed", e.seed, "engine");
  read(n, "select", e.select, "engine");
  read(n, "stop_tolerance", e.stop_tolerance, "engine");
  read(n, "stop_patience", e.stop_patience, "engine");
  std::string rule(to_string(e.rule));
  read(n, "rule", rule, "engine");
  try {
    e.rule = parse_selection_rule(rule);
  } catch (const ValidationError& err) {
    throw ConfigError(std::string("engine.rule: ") + err.what());
  }
  const YAML::Node tau = n ? n["tau"] : YAML::Node();
  check_keys(tau, "engine.tau", {"enabled", "initial", "log10_min", "log10_max", "half_width", "points", "passes"});
  read(tau, "enabled", e.tau.enabled, "engine.tau");
  read(tau, "initial", e.tau.initial, "engine.tau");
  read(tau, "log10_min", e.tau.log10_min, "engine.tau");
  read(tau, "log10_max", e.tau.log10_max, "engine.tau");
  read(tau, "half_width", e.tau.half_width, "engine.tau");
  read(tau, "points", e.tau.points, "engine.tau");
  read(tau, "passes", e.tau.passes, "engine.tau");
}

void read_simulation(const YAML::Node& n, sim::SimConfig& s) {
  check_keys(n, "simulation",
             {"n", "horizon", "a", "sd", "spatial", "seed", "replications", "basis_dim", "spatial_basis_dim",
              "grid_points"});
  read(n, "n", s.n, "simulation");
  read(n, "horizon", s.horizon, "simulation");
  read(n, "a", s.baseline_level, "simulation");
  read(n, "sd", s.effect_sd, "simulation");
  read(n, "spatial", s.spatial, "simulation");
  read(n, "seed", s.seed, "simulation");
  read(n, "replications", s.replications, "simulation");
  read(n, "basis_dim", s.basis_dim, "simulation");
  read(n, "spatial_basis_dim", s.spatial_basis_dim, "simulation");
  read(n, "grid_points", s.grid_points, "simulation");
}

void read_data(const YAML::Node& n, DataConfig& d) {
  check_keys(n, "data", {"path", "id", "time", "event", "covariates", "categorical", "horizon", "truncate"});
  read(n, "path", d.path, "data");
  read(n, "id", d.schema.id_column, "data");
  read(n, "time", d.schema.time_column, "data");
  read(n, "event", d.schema.event_column, "data");
  if (n) {
    d.schema.covariate_columns = read_names(n["covariates"], "data.covariates");
    d.schema.categorical_columns = read_names(n["categorical"], "data.categorical");
  }
  read(n, "horizon", d.horizon, "data");
  read(n, "truncate", d.truncate, "data");
  if (d.horizon < 0) throw ConfigError("data.horizon must be >= 0");
}

std::vector<TermSpec> read_terms(const YAML::Node& n) {
  std::vector<TermSpec> terms;
  if (!n || n.IsNull()) return terms;
  if (!n.IsSequence()) throw ConfigError("terms: expected a list");
  for (std::size_t i = 0; i < n.size(); ++i) {
    const YAML::Node t = n[i];
    const std::string path = "terms[" + std::to_string(i) + "]";
    check_keys(t, path, {"name", "kind", "columns", "column", "basis_dim", "degree", "penalty_order"});
    TermSpec spec;
    std::string kind = "univariate_smooth";
    read(t, "name", spec.name, path);
    read(t, "kind", kind, path);
    try {
      spec.kind = parse_term_kind(kind);
    } catch (const std::exception& e) {
      throw ConfigError(path + ".kind: " + e.what());
    }
    spec.columns = read_names(t["columns"], path + ".columns");
    if (t["column"]) spec.columns = read_names(t["column"], path + ".column");
    read(t, "basis_dim", spec.basis_dim, path);
    read(t, "degree", spec.degree, path);
    read(t, "penalty_order", spec.penalty_order, path);
    if (spec.name.empty()) {
      spec.name = spec.kind == TermKind::baseline_smooth ? "f0" : "f_" + (spec.columns.empty() ? kind : spec.columns[0]);
    }
    try {
      spec.validate();
    } catch (const std::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    terms.push_back(std::move(spec));
  }
  return terms;
}

void read_predict(const YAML::Node& n, PredictConfig& p) {
  check_keys(n, "predict", {"model", "mode", "input", "covariate", "grid", "grid_points", "times", "output"});
  read(n, "model", p.model, "predict");
  std::string mode = "survival";
  read(n, "mode", mode, "predict");
  try {
    p.mode = parse_predict_mode(mode);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("predict.mode: ") + e.what());
  }
  read(n, "input", p.input, "predict");
  read(n, "covariate", p.covariate, "predict");
  read(n, "grid", p.grid, "predict");
  read(n, "grid_points", p.grid_points, "predict");
  read(n, "times", p.times, "predict");
  read(n, "output", p.output, "predict");
  if (p.grid_points < 1) throw ConfigError("predict.grid_points must be >= 1");
}

void set_path(YAML::Node node, std::span<const std::string> parts, const YAML::Node& value) {
  if (parts.size() == 1) {
    node[parts[0]] = value;
    return;
  }
  set_path(node[parts[0]], parts.subspan(1), value);
}

void apply_override(YAML::Node& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + text + "'");
  std::vector<std::string> parts;
  std::string key = text.substr(0, eq);
  for (std::size_t pos = 0;;) {
    const auto dot = key.find('.', pos);
    parts.push_back(key.substr(pos, dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (std::any_of(parts.begin(), parts.end(), [](const std::string& p) { return p.empty(); })) {
    throw ConfigError("--set: malformed key '" + key + "'");
  }
  YAML::Node value;
  try {
    value = YAML::Load(text.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("--set " + key + ": " + e.what());
  }
  set_path(root, parts, value);
}

json term_json(const TermSpec& t) {
  return {{"name", t.name},
          {"kind", to_string(t.kind)},
          {"columns", t.columns},
          {"basis_dim", t.basis_dim},
          {"degree", t.degree},
          {"penalty_order", t.penalty_order}};
}

}  // namespace

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed, std::optional<int> threads, const std::string& out) {
  RunConfig c;
  YAML::Node root;
  if (!path.empty()) {
    try {
      root = YAML::LoadFile(path);
    } catch (const YAML::BadFile&) {
      throw ConfigError("cannot read config file '" + path + "'");
    } catch (const YAML::Exception& e) {
      throw ConfigError("config file '" + path + "': " + e.what());
    }
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) apply_override(root, o);
  if (seed) root["seed"] = *seed;
  if (threads) root["threads"] = *threads;
  if (!out.empty()) root["out"] = out;

  check_keys(root, "", {"seed", "threads", "out", "engine", "simulation", "data", "terms", "fit", "predict", "report"});
  read_engine(root["engine"], c.engine);
  read_simulation(root["simulation"], c.simulation);
  read_data(root["data"], c.data);
  c.terms = read_terms(root["terms"]);
  read_predict(root["predict"], c.predict);
  const YAML::Node fit = root["fit"];
  check_keys(fit, "fit", {"trajectories"});
  read(fit, "trajectories", c.write_trajectories, "fit");
  const YAML::Node report = root["report"];
  check_keys(report, "report", {"input"});
  read(report, "input", c.report_input, "report");

  read(root, "out", c.out, "");
  read(root, "threads", c.threads, "");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  if (root["seed"]) {
    std::uint64_t s = 0;
    read(root, "seed", s, "");
    c.engine.seed = s;
    c.simulation.seed = s;
  }
  c.source = root;
  return c;
}

std::vector<TermSpec> default_terms(const PersonData& data) {
  std::vector<TermSpec> terms;
  terms.push_back({"f0", TermKind::baseline_smooth, {}, 10, 3, 2});
  for (const auto& c : data.covariates) {
    if (c.kind == CovariateKind::categorical) {
      terms.push_back({"f_" + c.name, TermKind::categorical, {c.name}, static_cast<int>(c.levels.size()), 0, 0});
    } else {
      terms.push_back({"f_" + c.name, TermKind::univariate_smooth, {c.name}, 10, 3, 2});
    }
  }
  return terms;
}

void check_terms(const std::vector<TermSpec>& terms, const PersonData& data) {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    for (const auto& col : terms[i].columns) {
      const bool found = std::any_of(data.covariates.begin(), data.covariates.end(),
                                     [&](const CovariateInfo& c) { return c.name == col; });
      if (!found) {
        throw ConfigError("terms[" + std::to_string(i) + "].columns: unknown covariate '" + col + "'");
      }
    }
  }
}

std::string config_json(const RunConfig& c) {
  const auto& s = c.simulation;
  json terms = json::array();
  for (const auto& t : c.terms) terms.push_back(term_json(t));
  json j{{"out", c.out},
         {"threads", c.threads},
         {"engine", json::parse(engine_config_json(c.engine))},
         {"simulation",
          {{"n", s.n},
           {"horizon", s.horizon},
           {"a", s.baseline_level},
           {"sd", s.effect_sd},
           {"spatial", s.spatial},
           {"seed", s.seed},
           {"replications", s.replications},
           {"basis_dim", s.basis_dim},
           {"spatial_basis_dim", s.spatial_basis_dim},
           {"grid_points", s.grid_points}}},
         {"data",
          {{"path", c.data.path},
           {"id", c.data.schema.id_column},
           {"time", c.data.schema.time_column},
           {"event", c.data.schema.event_column},
           {"covariates", c.data.schema.covariate_columns},
           {"categorical", c.data.schema.categorical_columns},
           {"horizon", c.data.horizon},
           {"truncate", c.data.truncate}}},
         {"terms", terms},
         {"fit", {{"trajectories", c.write_trajectories}}}};
  return j.dump();
}

}  // namespace dhazard::cli
