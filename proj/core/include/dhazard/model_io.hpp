#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dhazard/basis.hpp"
#include "dhazard/engine.hpp"
#include "dhazard/model_core.hpp"
#include "dhazard/survival_data.hpp"

namespace dhazard {

inline constexpr int kModelFormatVersion = 1;

// A fitted term detached from the training data.
struct FittedTerm {
  TermSpec term;
  KeyKind key = KeyKind::individual;
  std::vector<std::size_t> columns;
  TermEncoder encoder;
  Centering centering;
  Eigen::VectorXd beta;
  Eigen::VectorXd tau;
  bool selected = true;
};

// Everything needed to predict hazards for new covariate profiles.
class HazardModel {
 public:
  HazardModel() = default;

  // `person` supplies the reference profile (continuous means, categorical modes).
  static HazardModel from_fit(const std::vector<DesignBlock>& blocks, const ModelState& state,
                              const FitReport& report, const AugmentedDataset& data, const PersonData& person);

  int horizon() const { return horizon_; }
  const std::vector<CovariateInfo>& covariates() const { return covariates_; }
  const std::vector<FittedTerm>& terms() const { return terms_; }
  const std::vector<double>& reference() const { return reference_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t covariate_index(const std::string& name) const;

  // Predictor for intervals t = 1..k of each covariate row (rows x k).
  Eigen::MatrixXd predictor(const Eigen::MatrixXd& covariates) const;
  Eigen::MatrixXd hazard(const Eigen::MatrixXd& covariates) const;
  // S(t) for t = 1..k.
  Eigen::MatrixXd survival(const Eigen::MatrixXd& covariates) const;

  // Rows of the reference profile with one covariate replaced by each grid value.
  Eigen::MatrixXd profile_grid(const std::string& covariate, std::span<const double> grid) const;

  // Equidistant grid over the training range of a continuous covariate, or
  // every level of a categorical one.
  std::vector<double> default_grid(const std::string& covariate, int points) const;

  // Arbitrary metadata echoed into the artifact (e.g. the run configuration).
  std::string config_json = "{}";

  std::string to_json() const;
  static HazardModel from_json(const std::string& text);
  void save(const std::string& path) const;
  static HazardModel load(const std::string& path);

 private:
  int horizon_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<CovariateInfo> covariates_;
  std::vector<std::pair<double, double>> ranges_;
  std::vector<double> reference_;
  std::vector<FittedTerm> terms_;
};

enum class PredictMode { hazard, survival, marginal_survival };

PredictMode parse_predict_mode(const std::string& text);

// Long-format prediction table: one row per (query row, t). `labels` names the
// query rows (column `label_name`); t = 0 is allowed for survival modes and
// yields 1. Throws ValidationError for t outside the model horizon.
void write_predictions(std::ostream& out, const HazardModel& model, PredictMode mode, const Eigen::MatrixXd& rows,
                       const std::vector<std::string>& label_names, const std::vector<std::vector<std::string>>& labels,
                       std::span<const int> times);

// JSON document with selection table, update frequencies, contributions, out-of-batch traces and seeds.
std::string fit_report_json(const FitReport& report, const ModelState& state, const std::string& config_json = "{}");

// Engine settings as a JSON object, for echoing into artifacts.
std::string engine_config_json(const EngineConfig& config);

// Writes the refit coefficient trajectories: iteration, term, index, value.
void write_trajectories_csv(std::ostream& out, const FitReport& report);

}  // namespace dhazard
