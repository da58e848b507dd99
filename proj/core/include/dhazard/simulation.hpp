#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dhazard/basis.hpp"
#include "dhazard/engine.hpp"
#include "dhazard/random.hpp"
#include "dhazard/survival_data.hpp"

namespace dhazard::sim {

struct SimConfig {
  int n = 5000;
  int horizon = 20;
  double baseline_level = -3.0;  // a in f0(t) = a - log(t) / 2
  double effect_sd = 1.0;
  bool spatial = false;
  std::uint64_t seed = 1;
  int replications = 1;
  // P-spline size of the univariate smooths fitted to simulated data.
  int basis_dim = 20;
  int spatial_basis_dim = 5;
  int grid_points = 200;

  // Throws ConfigError naming the field.
  void validate() const;
};

// Simulated covariates: x1..x9, plus lon and lat in the spatial setting.
struct CovariateTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // n x p

  std::size_t column(const std::string& name) const;
};

// Equidistant design points per column (x4 on [0, 1], the rest on [-3, 3]),
// each column independently permuted across individuals.
CovariateTable gen_covariates(int n, bool spatial, Rng& rng);

// Range of a simulated covariate.
std::pair<double, double> covariate_range(const std::string& name);

struct TrueModel {
  double baseline_level = -3.0;
  bool spatial = false;
  // Multipliers giving f1..f4 the requested sd over their unique design values.
  double scale[4] = {1.0, 1.0, 1.0, 1.0};

  double baseline(double t) const;
  // j in 1..9; j >= 5 are noise terms and return 0.
  double effect(int j, double x) const;
  double spatial_effect(double lon, double lat) const;

  // Unscaled informative effects f1..f4.
  static double raw_effect(int j, double x);
};

// Throws DegenerateInputError if an effect is constant on its design points.
TrueModel true_effects(const SimConfig& config);

// Sample standard deviation of the distinct values in `values`.
double unique_sd(std::span<const double> values);

// Linear predictor of individual i at time t.
double true_predictor(const TrueModel& model, const CovariateTable& covariates, std::size_t i, int t);

// Bernoulli draws per interval against the true hazard, first event time T,
// censoring C ~ U{1..k}; t = min(T, C, k), event = [T <= min(C, k)].
PersonData gen_events(const CovariateTable& covariates, const TrueModel& model, int horizon, Rng& rng);

// Mean squared difference after centering both curves.
double mse_effect(std::span<const double> truth, std::span<const double> estimate);

// Terms fitted to simulated data: baseline, f1..f9 and optionally fspa.
std::vector<TermSpec> simulation_terms(const SimConfig& config);

// Informative effects scored by MSE, with their term names.
std::vector<std::string> scored_effects(const SimConfig& config);

struct EffectCurve {
  std::string term;
  Eigen::MatrixXd grid;  // grid_points x (1 or 2)
  Eigen::VectorXd truth;
  Eigen::VectorXd estimate;
};

// True and fitted effect of one term over an equidistant grid (a square grid
// of grid_points points for the spatial term).
EffectCurve effect_curve(const SimConfig& config, const TrueModel& model, const DesignBlock& block,
                         const Eigen::VectorXd& beta);

struct ReplicationResult {
  int replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t rows = 0;
  double event_fraction = 0.0;
  std::vector<std::string> terms;
  std::vector<bool> selected;
  std::vector<double> update_frequency;
  std::vector<std::string> scored;
  std::vector<double> mse;
  std::vector<EffectCurve> curves;
  double max_abs_coefficient = 0.0;  // over all refit iterations
  double seconds = 0.0;
};

// Per-term share of successful replications in which the term was selected.
std::vector<double> selection_frequency(const std::vector<ReplicationResult>& reps);

struct StudyReport {
  SimConfig sim;
  EngineConfig engine;
  std::vector<ReplicationResult> replications;
};

// One replication, regenerated from (master seed, r) alone.
ReplicationResult run_replication(const SimConfig& config, const EngineConfig& engine, int r);

// R replications; `threads` workers share the list, results keep replication order.
StudyReport run_study(const SimConfig& config, const EngineConfig& engine, int threads = 1);

// Data of one replication without fitting it.
PersonData simulate_dataset(const SimConfig& config, std::uint64_t seed, TrueModel* model = nullptr);

std::uint64_t replication_seed(std::uint64_t master, int r);

void write_replications_csv(std::ostream& out, const StudyReport& report);
void write_effect_curves_csv(std::ostream& out, const StudyReport& report, const std::string& term);
std::string study_summary_json(const StudyReport& report);

}  // namespace dhazard::sim
