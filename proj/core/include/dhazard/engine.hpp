#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dhazard/basis.hpp"
#include "dhazard/model_core.hpp"
#include "dhazard/survival_data.hpp"

namespace dhazard {

// Log-spaced search for smoothing parameters. Each pass evaluates `points`
// values spread over +-half_width decades around the current value, then
// halves the width and recenters on the winner.
struct TauSearchConfig {
  bool enabled = true;
  double initial = 100.0;
  double log10_min = -2.0;
  double log10_max = 8.0;
  double half_width = 2.0;
  int points = 7;
  int passes = 2;
};

enum class SelectionRule { loglik, aic };

std::string_view to_string(SelectionRule rule);
SelectionRule parse_selection_rule(std::string_view text);

struct EngineConfig {
  int boost_iterations = 200;
  double step = 0.1;  // nu for boosting
  int refit_iterations = 200;
  int burn_in = 100;
  std::size_t batch_rows = 20000;
  TauSearchConfig tau;
  std::uint64_t seed = 1;
  bool select = true;
  // How boosting candidates are scored on the evaluation batch: plain
  // log-likelihood gain, or out-of-batch AIC gain where a term that has not
  // been accepted before is charged its edf on entry.
  SelectionRule rule = SelectionRule::aic;
  // Boosting stops once the best gain stays below stop_tolerance this many times in a row.
  double stop_tolerance = 1e-8;
  int stop_patience = 20;

  // Throws ConfigError; max_time is the longest individual block.
  void validate(int max_time = 1) const;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Seed streams derived from EngineConfig::seed.
enum class SeedStream : std::uint64_t { boost_fit = 1, boost_eval = 2, refit_fit = 3, refit_eval = 4 };

struct IterationRecord {
  int iteration = 0;
  int winner = -1;                // accepted term, -1 if none
  int best = -1;                  // best candidate, accepted or not
  double improvement = 0.0;       // best candidate's score: out-of-batch gain per evaluation row
  double oob_loglik = 0.0;        // mean per-row log-likelihood on the evaluation batch after the step
  std::uint64_t fit_seed = 0;
  std::uint64_t eval_seed = 0;
  std::size_t fit_rows = 0;
  std::size_t eval_rows = 0;
  bool ridge = false;
};

struct TermSummary {
  std::string name;
  bool selected = false;
  int updates = 0;
  double frequency = 0.0;     // updates / boosting iterations run
  double contribution = 0.0;  // summed accepted out-of-batch gains
  Eigen::VectorXd tau;
  int ridge_fallbacks = 0;
};

struct FitReport {
  std::uint64_t seed = 0;
  std::vector<TermSummary> terms;
  std::vector<IterationRecord> boosting;
  std::vector<IterationRecord> refit;
  bool early_stopped = false;
  // Refit coefficient path: trajectories[iteration][term].
  std::vector<std::vector<Eigen::VectorXd>> trajectories;
  double boosting_seconds = 0.0;
  double refit_seconds = 0.0;

  std::vector<std::size_t> selected() const;
};

// (1 - nu) old + nu batch.
Eigen::VectorXd stochastic_update(const Eigen::VectorXd& old_beta, const Eigen::VectorXd& batch_beta, double nu);

struct TauSearchResult {
  Eigen::VectorXd tau;
  Eigen::VectorXd beta;  // batch solution at the chosen tau
  double score = 0.0;    // out-of-batch AIC contribution at the chosen tau
  bool ridge = false;
};

// Picks tau for term j by out-of-batch AIC. Candidate solutions come from the
// normal equations `ne` (fit batch); each is scored by -2 loglik on the
// evaluation frame (with term j replaced, rescaled by 1 / eval.share()) plus
// 2 edf from the fit batch.
// Ties go to the larger tau. Bivariate terms are searched one component at a time.
TauSearchResult tau_search(const std::vector<DesignBlock>& blocks, std::size_t j, const ModelState& state,
                           const NormalEquations& ne, const Frame& eval, const Eigen::VectorXd& eval_eta,
                           const TauSearchConfig& grid);

// The log10 values visited by one pass around `center`.
std::vector<double> tau_grid(double center_log10, double half_width, const TauSearchConfig& grid);

// Working state of a boosting run.
struct BoostingTally {
  std::vector<int> updates;
  std::vector<double> contribution;
  std::vector<int> ridge;
};

// One boosting step: every active term proposes a step-nu update from the fit
// batch, the proposal with the largest out-of-batch gain is applied when that
// gain is positive, and the winner's tau is re-searched.
IterationRecord boosting_iteration(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                   ModelState& state, const EngineConfig& config, int iteration,
                                   BoostingTally& tally, const std::vector<bool>& active = {});

// Same step on explicit frames.
IterationRecord boosting_step(const std::vector<DesignBlock>& blocks, ModelState& state, const Frame& fit,
                              const Frame& eval, const EngineConfig& config, BoostingTally& tally,
                              const std::vector<bool>& active = {});

std::pair<ModelState, FitReport> run_boosting(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                              const EngineConfig& config);

// Backfitting sweep over `terms` on one batch with step nu. When `eval` is
// given and tau search is enabled, each penalized term's tau is re-searched on
// it first. eta vectors are kept in sync with the state.
bool batch_sweep(const std::vector<DesignBlock>& blocks, const std::vector<std::size_t>& terms, ModelState& state,
                 const Frame& fit, Eigen::VectorXd& fit_eta, const Frame* eval, Eigen::VectorXd* eval_eta,
                 double nu, const TauSearchConfig& grid);

// Resampling refit of the selected terms with nu = 1. Returned coefficients
// are the mean over post burn-in iterations; unselected terms stay zero.
std::pair<ModelState, FitReport> run_refit(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                           const std::vector<std::size_t>& selected, const EngineConfig& config,
                                           const std::optional<ModelState>& start = std::nullopt);

// Boosting selection followed by the refit. Throws FitError when boosting
// selects nothing.
std::pair<ModelState, FitReport> fit(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                     const EngineConfig& config);

}  // namespace dhazard
