#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dhazard/basis.hpp"
#include "dhazard/engine.hpp"
#include "dhazard/model_io.hpp"
#include "dhazard/simulation.hpp"
#include "dhazard/survival_data.hpp"

namespace dhazard::cli {

struct DataConfig {
  std::string path;
  CsvSchema schema;
  int horizon = 0;  // 0: longest observed time
  bool truncate = false;
};

struct PredictConfig {
  std::string model;
  PredictMode mode = PredictMode::survival;
  std::string input;
  std::string covariate;
  std::vector<double> grid;
  int grid_points = 20;
  std::vector<int> times;
  std::string output;
};

struct RunConfig {
  std::string out = ".";
  int threads = 1;
  EngineConfig engine;
  sim::SimConfig simulation;
  DataConfig data;
  std::vector<TermSpec> terms;  // empty: default terms from the data
  bool write_trajectories = false;
  PredictConfig predict;
  std::string report_input;

  YAML::Node source;  // configuration after overrides
};

// Loads the YAML file (empty path: all defaults), applies `key.path=value`
// overrides, then the top-level flags. Throws ConfigError naming the field.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed, std::optional<int> threads, const std::string& out);

// Baseline smooth plus one term per covariate.
std::vector<TermSpec> default_terms(const PersonData& data);

// Every term column must name a covariate of the data.
void check_terms(const std::vector<TermSpec>& terms, const PersonData& data);

// The effective configuration as JSON text.
std::string config_json(const RunConfig& config);

}  // namespace dhazard::cli
