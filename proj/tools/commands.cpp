#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dhazard/csv.hpp"
#include "dhazard/error.hpp"
#include "json.hpp"

namespace dhazard::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path output_dir(const RunConfig& config) {
  const fs::path dir(config.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create output directory '" + config.out + "'");
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

std::vector<int> default_times(int horizon) {
  std::vector<int> t;
  for (int s = 1; s <= horizon; ++s) t.push_back(s);
  return t;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("query row " + std::to_string(row) + ", column '" + column + "': not a number: '" + cell + "'");
}

// Query rows read from CSV: one column per model covariate, labels from `id` if present.
Eigen::MatrixXd read_query(const HazardModel& model, const std::string& path, std::vector<std::string>& label_names,
                           std::vector<std::vector<std::string>>& labels) {
  const csv::Table table = csv::read_file(path);
  const auto& covs = model.covariates();
  std::vector<int> cols;
  for (const auto& c : covs) {
    const int col = table.column(c.name);
    if (col < 0) throw ValidationError("query '" + path + "': missing column '" + c.name + "'");
    cols.push_back(col);
  }
  const int id_col = table.column("id");
  label_names = {id_col >= 0 ? "id" : "row"};
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(covs.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    for (std::size_t c = 0; c < covs.size(); ++c) {
      const std::string& cell = cells.at(static_cast<std::size_t>(cols[c]));
      double v = 0.0;
      if (covs[c].kind == CovariateKind::categorical) {
        const auto& levels = covs[c].levels;
        const auto it = std::find(levels.begin(), levels.end(), cell);
        if (it == levels.end()) {
          throw ValidationError("query row " + std::to_string(r + 1) + ", column '" + covs[c].name +
                                "': unknown level '" + cell + "'");
        }
        v = static_cast<double>(it - levels.begin());
      } else {
        v = parse_number(cell, r + 1, covs[c].name);
      }
      rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    labels.push_back({id_col >= 0 ? cells.at(static_cast<std::size_t>(id_col)) : std::to_string(r + 1)});
  }
  return rows;
}

void print_selection(const json& terms) {
  std::printf("%-16s %-9s %8s %10s\n", "term", "selected", "updates", "frequency");
  for (const auto& t : terms) {
    std::printf("%-16s %-9s %8d %10.3f\n", t.at("name").get<std::string>().c_str(),
                t.at("selected").get<bool>() ? "yes" : "no", t.at("updates").get<int>(), t.at("frequency").get<double>());
  }
}

void report_study(const json& j) {
  std::printf("replications: %d (succeeded %d)\n", j.at("replications").get<int>(), j.at("succeeded").get<int>());
  std::printf("event fraction: %.4f, augmented rows: %.0f\n", j.at("event_fraction_mean").get<double>(),
              j.at("augmented_rows_mean").get<double>());
  std::printf("\n%-8s %10s\n", "term", "selected");
  for (const auto& [name, f] : j.at("selection_frequency").items()) std::printf("%-8s %10.3f\n", name.c_str(), f.get<double>());
  std::printf("\n%-8s %10s %10s %10s %10s\n", "effect", "mean", "median", "q10", "q90");
  for (const auto& [name, m] : j.at("mse").items()) {
    std::printf("%-8s %10.5f %10.5f %10.5f %10.5f\n", name.c_str(), m.at("mean").get<double>(),
                m.at("median").get<double>(), m.at("q10").get<double>(), m.at("q90").get<double>());
  }
  for (const auto& f : j.at("failures")) {
    std::printf("replication %d failed: %s\n", f.at("replication").get<int>(), f.at("error").get<std::string>().c_str());
  }
}

void report_fit(const json& j) {
  std::printf("seed: %llu, boosting iterations: %d, refit iterations: %d%s\n",
              static_cast<unsigned long long>(j.at("seed").get<std::uint64_t>()),
              j.at("boosting_iterations_run").get<int>(), j.at("refit_iterations_run").get<int>(),
              j.at("early_stopped").get<bool>() ? " (stopped early)" : "");
  print_selection(j.at("terms"));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

void cmd_simulate(const RunConfig& config) {
  config.simulation.validate();
  config.engine.validate();
  const fs::path dir = output_dir(config);
  const sim::StudyReport study = sim::run_study(config.simulation, config.engine, config.threads);

  write_text(dir / "study_summary.json", sim::study_summary_json(study));
  {
    auto out = open_output(dir / "replications.csv");
    sim::write_replications_csv(out, study);
  }
  for (const auto& term : sim::scored_effects(config.simulation)) {
    auto out = open_output(dir / ("effects_" + term + ".csv"));
    sim::write_effect_curves_csv(out, study, term);
  }
  int ok = 0;
  for (const auto& r : study.replications) ok += r.ok ? 1 : 0;
  std::fprintf(stderr, "simulate: %d/%d replications succeeded, results in %s\n", ok,
               static_cast<int>(study.replications.size()), dir.string().c_str());
}

void cmd_fit(const RunConfig& config) {
  if (config.data.path.empty()) throw ConfigError("data.path is required for fit");
  PersonData person = load_csv(config.data.path, config.data.schema);
  int horizon = config.data.horizon > 0 ? config.data.horizon : person.max_time();
  if (config.data.truncate) person = truncate_to_horizon(std::move(person), horizon);

  RunConfig resolved = config;
  if (resolved.terms.empty()) resolved.terms = default_terms(person);
  check_terms(resolved.terms, person);
  resolved.data.horizon = horizon;

  const AugmentedDataset data = augment(person, horizon);
  const auto blocks = build_design(resolved.terms, data);
  const fs::path dir = output_dir(config);
  const auto [state, report] = fit(blocks, data, config.engine);

  const std::string echo = config_json(resolved);
  HazardModel model = HazardModel::from_fit(blocks, state, report, data, person);
  model.config_json = echo;
  model.save((dir / "model.json").string());
  write_text(dir / "fit_report.json", fit_report_json(report, state, echo));
  if (config.write_trajectories) {
    auto out = open_output(dir / "trajectories.csv");
    write_trajectories_csv(out, report);
  }
  std::fprintf(stderr, "fit: %zu individuals, %zu rows, %zu of %zu terms selected, model in %s\n",
               data.num_individuals(), data.total_rows(), report.selected().size(), blocks.size(),
               (dir / "model.json").string().c_str());
}

void cmd_predict(const RunConfig& config) {
  const auto& p = config.predict;
  const std::string model_path = p.model.empty() ? (fs::path(config.out) / "model.json").string() : p.model;
  const HazardModel model = HazardModel::load(model_path);
  const std::vector<int> times = p.times.empty() ? default_times(model.horizon()) : p.times;

  std::vector<std::string> label_names;
  std::vector<std::vector<std::string>> labels;
  Eigen::MatrixXd rows;
  if (p.mode == PredictMode::marginal_survival) {
    if (p.covariate.empty()) throw ConfigError("predict.covariate is required for marginal_survival");
    const std::size_t c = model.covariate_index(p.covariate);
    const auto& info = model.covariates()[c];
    const std::vector<double> grid = p.grid.empty() ? model.default_grid(p.covariate, p.grid_points) : p.grid;
    rows = model.profile_grid(p.covariate, grid);
    label_names = {p.covariate};
    for (double g : grid) {
      if (info.kind == CovariateKind::categorical) {
        const auto level = static_cast<std::size_t>(g);
        if (g < 0 || level >= info.levels.size() || static_cast<double>(level) != g) {
          throw ValidationError("predict.grid: " + csv::format_double(g) + " is not a level index of '" + p.covariate + "'");
        }
        labels.push_back({info.levels[level]});
      } else {
        labels.push_back({csv::format_double(g)});
      }
    }
  } else if (!p.input.empty()) {
    rows = read_query(model, p.input, label_names, labels);
  } else {
    Eigen::VectorXd ref = Eigen::Map<const Eigen::VectorXd>(model.reference().data(),
                                                            static_cast<Eigen::Index>(model.reference().size()));
    rows = ref.transpose();
    label_names = {"profile"};
    labels = {{"reference"}};
  }

  const fs::path out_path = p.output.empty() ? output_dir(config) / "predictions.csv" : fs::path(p.output);
  std::ostringstream buffer;
  write_predictions(buffer, model, p.mode, rows, label_names, labels, times);
  auto out = open_output(out_path);
  out << buffer.str();
  std::fprintf(stderr, "predict: %zu rows x %zu times written to %s\n", static_cast<std::size_t>(rows.rows()),
               times.size(), out_path.string().c_str());
}

void cmd_report(const RunConfig& config) {
  const fs::path input = config.report_input.empty() ? fs::path(config.out) : fs::path(config.report_input);
  if (fs::is_directory(input)) {
    bool found = false;
    if (fs::exists(input / "study_summary.json")) {
      report_study(read_json(input / "study_summary.json"));
      found = true;
    }
    if (fs::exists(input / "fit_report.json")) {
      if (found) std::printf("\n");
      report_fit(read_json(input / "fit_report.json"));
      found = true;
    }
    if (!found) throw ValidationError("no study_summary.json or fit_report.json in '" + input.string() + "'");
    return;
  }
  const json j = read_json(input);
  if (j.contains("selection_frequency")) {
    report_study(j);
  } else if (j.contains("boosting_iterations_run")) {
    report_fit(j);
  } else if (j.value("format", "") == "dhazard-model") {
    std::printf("model: horizon %d, seed %llu\n", j.at("horizon").get<int>(),
                static_cast<unsigned long long>(j.at("seed").get<std::uint64_t>()));
    std::printf("%-16s %-18s %-9s %s\n", "term", "kind", "selected", "tau");
    for (const auto& t : j.at("terms")) {
      std::string tau;
      for (const auto& v : t.at("tau")) tau += (tau.empty() ? "" : " ") + csv::format_double(v.get<double>());
      std::printf("%-16s %-18s %-9s %s\n", t.at("name").get<std::string>().c_str(),
                  t.at("kind").get<std::string>().c_str(), t.at("selected").get<bool>() ? "yes" : "no", tau.c_str());
    }
  } else {
    throw ValidationError("'" + input.string() + "' is not a study summary, fit report or model");
  }
}

}  // namespace dhazard::cli
