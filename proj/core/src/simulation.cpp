#include "dhazard/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "dhazard/csv.hpp"
#include "dhazard/error.hpp"
#include "dhazard/model_core.hpp"
#include "dhazard/model_io.hpp"
#include "json.hpp"

namespace dhazard::sim {

namespace {

constexpr int kInformative = 4;
constexpr int kCovariates = 9;
constexpr std::uint64_t kReplicationStream = 0x5eed;

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  v.back() = hi;
  return v;
}

std::string effect_name(int j) { return "f" + std::to_string(j); }

}  // namespace

void SimConfig::validate() const {
  if (n < 10) throw ConfigError("simulation.n must be >= 10");
  if (horizon < 2) throw ConfigError("simulation.horizon must be >= 2");
  if (baseline_level != -2.0 && baseline_level != -3.0 && baseline_level != -4.0) {
    throw ConfigError("simulation.a must be one of -2, -3, -4");
  }
  if (!(effect_sd > 0.0)) throw ConfigError("simulation.sd must be > 0");
  if (replications < 1) throw ConfigError("simulation.replications must be >= 1");
  if (basis_dim < 5) throw ConfigError("simulation.basis_dim must be >= 5");
  if (spatial_basis_dim < 5) throw ConfigError("simulation.spatial_basis_dim must be >= 5");
  if (grid_points < 2) throw ConfigError("simulation.grid_points must be >= 2");
}

std::size_t CovariateTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c] == name) return c;
  }
  throw ValidationError("unknown simulated covariate '" + name + "'");
}

std::pair<double, double> covariate_range(const std::string& name) {
  if (name == "x4") return {0.0, 1.0};
  return {-3.0, 3.0};
}

CovariateTable gen_covariates(int n, bool spatial, Rng& rng) {
  if (n < 2) throw ValidationError("gen_covariates: n must be >= 2");
  CovariateTable table;
  for (int j = 1; j <= kCovariates; ++j) table.names.push_back("x" + std::to_string(j));
  if (spatial) {
    table.names.push_back("lon");
    table.names.push_back("lat");
  }
  table.values.resize(n, static_cast<Eigen::Index>(table.names.size()));
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    const auto [lo, hi] = covariate_range(table.names[c]);
    std::vector<double> v = linspace(lo, hi, n);
    // Fisher-Yates with the project's bounded sampler.
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::swap(v[i], v[rng.uniform_index(i + 1)]);
    }
    for (int i = 0; i < n; ++i) table.values(i, static_cast<Eigen::Index>(c)) = v[static_cast<std::size_t>(i)];
  }
  return table;
}

double TrueModel::raw_effect(int j, double x) {
  switch (j) {
    case 1: return 0.5 * x;
    case 2: return 1.5 * std::sin(x);
    case 3: return x * x / 6.0 - 1.5;
    case 4: return std::sin(2.0 * (4.0 * x - 2.0)) + 2.0 * std::exp(-256.0 * (x - 0.5) * (x - 0.5));
    default: return 0.0;
  }
}

double TrueModel::baseline(double t) const { return baseline_level - 0.5 * std::log(t); }

double TrueModel::effect(int j, double x) const {
  if (j < 1 || j > kCovariates) throw ValidationError("effect index must lie in 1..9");
  if (j > kInformative) return 0.0;
  return scale[j - 1] * raw_effect(j, x);
}

double TrueModel::spatial_effect(double lon, double lat) const {
  return 2.5 * std::sin(lon) * std::sin(0.5 * lat) - 0.3;
}

double unique_sd(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::vector<double> u;
  for (double x : v) {
    if (u.empty() || std::abs(x - u.back()) > 1e-12 * std::max(1.0, std::abs(x))) u.push_back(x);
  }
  if (u.size() < 2) return 0.0;
  const double mean = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
  double ss = 0.0;
  for (double x : u) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(u.size() - 1));
}

TrueModel true_effects(const SimConfig& config) {
  TrueModel model;
  model.baseline_level = config.baseline_level;
  model.spatial = config.spatial;
  for (int j = 1; j <= kInformative; ++j) {
    const auto [lo, hi] = covariate_range("x" + std::to_string(j));
    std::vector<double> f;
    for (double x : linspace(lo, hi, config.n)) f.push_back(TrueModel::raw_effect(j, x));
    const double sd = unique_sd(f);
    if (!(sd > 0.0)) throw DegenerateInputError("effect f" + std::to_string(j) + " is constant; cannot scale");
    model.scale[j - 1] = config.effect_sd / sd;
  }
  return model;
}

double true_predictor(const TrueModel& model, const CovariateTable& covariates, std::size_t i, int t) {
  const auto row = static_cast<Eigen::Index>(i);
  double eta = model.baseline(t);
  for (int j = 1; j <= kInformative; ++j) eta += model.effect(j, covariates.values(row, j - 1));
  if (model.spatial) {
    eta += model.spatial_effect(covariates.values(row, covariates.column("lon")),
                                covariates.values(row, covariates.column("lat")));
  }
  return eta;
}

PersonData gen_events(const CovariateTable& covariates, const TrueModel& model, int horizon, Rng& rng) {
  PersonData out;
  for (const auto& name : covariates.names) out.covariates.push_back({name, CovariateKind::continuous, {}});
  const auto n = static_cast<std::size_t>(covariates.values.rows());
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int event_time = 0;  // 0 means no event within the horizon
    for (int t = 1; t <= horizon; ++t) {
      const double u = rng.uniform01();
      if (event_time == 0 && u <= inverse_link(true_predictor(model, covariates, i, t))) event_time = t;
    }
    const int censor = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(horizon))) + 1;
    IndividualRecord r;
    r.id = std::to_string(i + 1);
    const int limit = std::min(censor, horizon);
    if (event_time != 0 && event_time <= limit) {
      r.time = event_time;
      r.event = 1;
    } else {
      r.time = limit;
      r.event = 0;
    }
    r.covariates.resize(covariates.names.size());
    for (std::size_t c = 0; c < r.covariates.size(); ++c) {
      r.covariates[c] = covariates.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

double mse_effect(std::span<const double> truth, std::span<const double> estimate) {
  if (truth.size() != estimate.size() || truth.empty()) throw DimensionError("mse_effect: length mismatch");
  const double n = static_cast<double>(truth.size());
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  const double me = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = (estimate[i] - me) - (truth[i] - mt);
    ss += d * d;
  }
  return ss / n;
}

std::vector<TermSpec> simulation_terms(const SimConfig& config) {
  std::vector<TermSpec> terms;
  terms.push_back({"f0", TermKind::baseline_smooth, {}, 10, 3, 2});
  for (int j = 1; j <= kCovariates; ++j) {
    terms.push_back({effect_name(j), TermKind::univariate_smooth, {"x" + std::to_string(j)}, config.basis_dim, 3, 2});
  }
  if (config.spatial) {
    terms.push_back({"fspa", TermKind::bivariate_smooth, {"lon", "lat"}, config.spatial_basis_dim, 3, 2});
  }
  return terms;
}

std::vector<std::string> scored_effects(const SimConfig& config) {
  std::vector<std::string> out;
  for (int j = 1; j <= kInformative; ++j) out.push_back(effect_name(j));
  if (config.spatial) out.push_back("fspa");
  return out;
}

EffectCurve effect_curve(const SimConfig& config, const TrueModel& model, const DesignBlock& block,
                         const Eigen::VectorXd& beta) {
  EffectCurve c;
  c.term = block.term.name;
  if (block.term.kind == TermKind::bivariate_smooth) {
    // Square grid with about grid_points nodes.
    const int side = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(config.grid_points)))));
    const auto xs = linspace(-3.0, 3.0, side);
    c.grid.resize(side * side, 2);
    c.truth.resize(side * side);
    for (int a = 0; a < side; ++a) {
      for (int b = 0; b < side; ++b) {
        const int r = a * side + b;
        c.grid(r, 0) = xs[static_cast<std::size_t>(a)];
        c.grid(r, 1) = xs[static_cast<std::size_t>(b)];
        c.truth(r) = model.spatial_effect(c.grid(r, 0), c.grid(r, 1));
      }
    }
  } else {
    const std::string& column = block.term.columns.at(0);
    const int j = std::stoi(column.substr(1));
    const auto [lo, hi] = covariate_range(column);
    const auto xs = linspace(lo, hi, config.grid_points);
    c.grid = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    c.truth.resize(c.grid.rows());
    for (Eigen::Index r = 0; r < c.grid.rows(); ++r) c.truth(r) = model.effect(j, c.grid(r, 0));
  }
  c.estimate = block.evaluate(c.grid) * beta;
  return c;
}

std::vector<double> selection_frequency(const std::vector<ReplicationResult>& reps) {
  std::vector<double> freq;
  int ok = 0;
  for (const auto& r : reps) {
    if (!r.ok) continue;
    if (freq.empty()) freq.assign(r.selected.size(), 0.0);
    for (std::size_t j = 0; j < r.selected.size(); ++j) freq[j] += r.selected[j] ? 1.0 : 0.0;
    ++ok;
  }
  for (auto& f : freq) f /= ok;
  return freq;
}

std::uint64_t replication_seed(std::uint64_t master, int r) {
  return derive_seed(master, kReplicationStream, static_cast<std::uint64_t>(r));
}

PersonData simulate_dataset(const SimConfig& config, std::uint64_t seed, TrueModel* model_out) {
  const TrueModel model = true_effects(config);
  Rng rng(derive_seed(seed, 1, 0));
  const CovariateTable cov = gen_covariates(config.n, config.spatial, rng);
  PersonData data = gen_events(cov, model, config.horizon, rng);
  if (model_out) *model_out = model;
  return data;
}

ReplicationResult run_replication(const SimConfig& config, const EngineConfig& engine, int r) {
  ReplicationResult out;
  out.replication = r;
  out.seed = replication_seed(config.seed, r);
  const auto start = std::chrono::steady_clock::now();
  try {
    TrueModel model;
    const PersonData person = simulate_dataset(config, out.seed, &model);
    const AugmentedDataset data = augment(person, config.horizon);
    out.rows = data.total_rows();
    double events = 0.0;
    for (std::size_t i = 0; i < data.num_individuals(); ++i) events += data.event(i);
    out.event_fraction = events / static_cast<double>(data.num_individuals());

    const auto terms = simulation_terms(config);
    const auto blocks = build_design(terms, data);
    EngineConfig ec = engine;
    ec.seed = derive_seed(out.seed, 2, 0);
    const auto [state, report] = fit(blocks, data, ec);

    for (const auto& iterate : report.trajectories) {
      for (const auto& b : iterate) {
        if (b.size() > 0) out.max_abs_coefficient = std::max(out.max_abs_coefficient, b.cwiseAbs().maxCoeff());
      }
    }
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      out.terms.push_back(blocks[j].term.name);
      out.selected.push_back(report.terms[j].selected);
      out.update_frequency.push_back(report.terms[j].frequency);
    }
    for (const auto& name : scored_effects(config)) {
      const auto it = std::find(out.terms.begin(), out.terms.end(), name);
      const auto j = static_cast<std::size_t>(it - out.terms.begin());
      EffectCurve curve = effect_curve(config, model, blocks[j], state.beta[j]);
      out.scored.push_back(name);
      out.mse.push_back(mse_effect({curve.truth.data(), static_cast<std::size_t>(curve.truth.size())},
                                   {curve.estimate.data(), static_cast<std::size_t>(curve.estimate.size())}));
      out.curves.push_back(std::move(curve));
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

StudyReport run_study(const SimConfig& config, const EngineConfig& engine, int threads) {
  config.validate();
  StudyReport report;
  report.sim = config;
  report.engine = engine;
  report.replications.resize(static_cast<std::size_t>(config.replications));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < config.replications; r = next++) {
      report.replications[static_cast<std::size_t>(r)] = run_replication(config, engine, r);
    }
  };
  const int workers = std::clamp(threads, 1, config.replications);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return report;
}

void write_replications_csv(std::ostream& out, const StudyReport& report) {
  const auto& reps = report.replications;
  std::vector<std::string> terms;
  std::vector<std::string> scored = scored_effects(report.sim);
  for (const auto& t : simulation_terms(report.sim)) terms.push_back(t.name);

  std::vector<std::string> header{"replication", "seed", "ok", "error", "rows", "event_fraction"};
  for (const auto& t : terms) header.push_back("selected_" + t);
  for (const auto& t : terms) header.push_back("frequency_" + t);
  for (const auto& s : scored) header.push_back("mse_" + s);
  csv::write_row(out, header);

  for (const auto& r : reps) {
    std::vector<std::string> row{std::to_string(r.replication), std::to_string(r.seed), r.ok ? "1" : "0", r.error,
                                 std::to_string(r.rows), csv::format_double(r.event_fraction)};
    for (std::size_t j = 0; j < terms.size(); ++j) {
      row.push_back(r.ok ? (r.selected[j] ? "1" : "0") : "");
    }
    for (std::size_t j = 0; j < terms.size(); ++j) {
      row.push_back(r.ok ? csv::format_double(r.update_frequency[j]) : "");
    }
    for (std::size_t s = 0; s < scored.size(); ++s) row.push_back(r.ok ? csv::format_double(r.mse[s]) : "");
    csv::write_row(out, row);
  }
}

void write_effect_curves_csv(std::ostream& out, const StudyReport& report, const std::string& term) {
  const bool spatial = term == "fspa";
  std::vector<std::string> header{"replication"};
  if (spatial) {
    header.insert(header.end(), {"lon", "lat"});
  } else {
    header.push_back("x");
  }
  header.insert(header.end(), {"true", "estimate"});
  csv::write_row(out, header);
  for (const auto& r : report.replications) {
    if (!r.ok) continue;
    for (const auto& c : r.curves) {
      if (c.term != term) continue;
      const double mt = c.truth.mean();
      const double me = c.estimate.mean();
      for (Eigen::Index i = 0; i < c.grid.rows(); ++i) {
        std::vector<std::string> row{std::to_string(r.replication)};
        for (Eigen::Index k = 0; k < c.grid.cols(); ++k) row.push_back(csv::format_double(c.grid(i, k)));
        row.push_back(csv::format_double(c.truth(i) - mt));
        row.push_back(csv::format_double(c.estimate(i) - me));
        csv::write_row(out, row);
      }
    }
  }
}

namespace {

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::string study_summary_json(const StudyReport& report) {
  using nlohmann::json;
  const auto& s = report.sim;
  json j;
  j["config"] = {{"simulation",
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
                 {"engine", json::parse(engine_config_json(report.engine))}};

  int ok = 0;
  double seconds = 0.0;
  std::vector<double> events, rows;
  json failures = json::array();
  for (const auto& r : report.replications) {
    seconds += r.seconds;
    if (!r.ok) {
      failures.push_back({{"replication", r.replication}, {"error", r.error}});
      continue;
    }
    ++ok;
    events.push_back(r.event_fraction);
    rows.push_back(static_cast<double>(r.rows));
  }
  j["replications"] = report.replications.size();
  j["succeeded"] = ok;
  j["failures"] = failures;
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  j["event_fraction_mean"] = mean(events);
  j["augmented_rows_mean"] = mean(rows);

  json sel = json::object();
  const auto freq = selection_frequency(report.replications);
  const auto terms = simulation_terms(s);
  for (std::size_t t = 0; t < terms.size() && t < freq.size(); ++t) sel[terms[t].name] = freq[t];
  j["selection_frequency"] = sel;

  json mse = json::object();
  const auto scored = scored_effects(s);
  for (std::size_t e = 0; e < scored.size(); ++e) {
    std::vector<double> v;
    for (const auto& r : report.replications) {
      if (r.ok) v.push_back(r.mse[e]);
    }
    mse[scored[e]] = {{"mean", mean(v)},
                      {"median", quantile(v, 0.5)},
                      {"q10", quantile(v, 0.1)},
                      {"q90", quantile(v, 0.9)}};
  }
  j["mse"] = mse;
  j["timing"] = {{"total_seconds", seconds},
                 {"mean_seconds_per_replication",
                  report.replications.empty() ? 0.0 : seconds / static_cast<double>(report.replications.size())}};
  return j.dump(2);
}

}  // namespace dhazard::sim
