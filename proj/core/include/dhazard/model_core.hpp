#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "dhazard/basis.hpp"
#include "dhazard/survival_data.hpp"

namespace dhazard {

// Working weights are clamped below at this value before forming z.
inline constexpr double kWeightFloor = 1e-8;
// Added to the diagonal when the penalized normal matrix cannot be factorized.
inline constexpr double kRidgeFallback = 1e-8;

// Logistic inverse link h(eta), evaluated without overflow.
double inverse_link(double eta);
// log h(eta) and log(1 - h(eta)).
double log_inverse_link(double eta);
double log1m_inverse_link(double eta);

// S(t) = prod_{r <= t} (1 - hazard_r). Throws DomainError for hazards outside [0, 1].
std::vector<double> survival_curve(std::span<const double> hazard);

// Bernoulli log-likelihood sum_r [y log h(eta) + (1 - y) log(1 - h(eta))].
double loglik(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& eta);

struct WorkingQuantities {
  Eigen::VectorXd u;  // score dl/deta
  Eigen::VectorXd w;  // -d2l/deta2, floored
  Eigen::VectorXd z;  // eta + u / w
};

WorkingQuantities score_weights(const Eigen::Ref<const Eigen::VectorXd>& y,
                                const Eigen::Ref<const Eigen::VectorXd>& eta);

// Coefficients and smoothing parameters of all terms. tau[j] holds one entry
// per penalty component of block j and is empty for unpenalized terms.
struct ModelState {
  std::vector<Eigen::VectorXd> beta;
  std::vector<Eigen::VectorXd> tau;

  bool operator==(const ModelState& other) const;
};

ModelState initial_state(const std::vector<DesignBlock>& blocks, double tau0);

// The augmented rows of a set of whole individuals, in batch order. Keys of
// individual-indexed terms are frame-local positions into individuals().
class Frame {
 public:
  Frame() = default;
  Frame(const AugmentedDataset& data, const Batch& batch);

  std::size_t rows() const { return row_time_.size(); }
  // rows() / total rows of the dataset the frame was drawn from.
  double share() const { return share_; }
  std::span<const std::uint32_t> individuals() const { return individuals_; }
  int horizon() const { return horizon_; }
  const Eigen::VectorXd& y() const { return y_; }

  std::size_t num_keys(KeyKind key) const {
    return key == KeyKind::time ? static_cast<std::size_t>(horizon_) : individuals_.size();
  }
  std::size_t local_key(KeyKind key, std::size_t row) const {
    return key == KeyKind::time ? static_cast<std::size_t>(row_time_[row] - 1) : row_local_[row];
  }
  std::size_t global_key(KeyKind key, std::size_t local) const {
    return key == KeyKind::time ? local : individuals_[local];
  }

 private:
  int horizon_ = 0;
  double share_ = 1.0;
  std::vector<std::uint32_t> individuals_;
  std::vector<std::uint32_t> row_local_;
  std::vector<std::int32_t> row_time_;
  Eigen::VectorXd y_;
};

// Rows of the block's basis for every local key of the frame.
Eigen::MatrixXd local_basis(const DesignBlock& block, const Frame& frame);

// f_j evaluated at every local key of the frame.
Eigen::VectorXd term_values(const DesignBlock& block, const Eigen::VectorXd& beta, const Frame& frame);

// Adds per-key values to the row-level predictor.
void add_to_rows(const DesignBlock& block, const Eigen::VectorXd& key_values, const Frame& frame,
                 Eigen::VectorXd& eta, double scale = 1.0);

// eta = sum_j X_j beta_j on the frame's rows.
Eigen::VectorXd predictor(const std::vector<DesignBlock>& blocks, const ModelState& state, const Frame& frame);

// X'WX and X'W(z - eta_{-j}) for one term, aggregated over keys.
// penalty_scale multiplies the penalty in every solve. accumulate() sets it to
// the frame's share of the data, so a batch solve targets the same penalized
// criterion as the full data.
struct NormalEquations {
  Eigen::MatrixXd xtwx;
  Eigen::VectorXd xtwr;
  double penalty_scale = 1.0;
};

NormalEquations accumulate(const DesignBlock& block, const Eigen::VectorXd& beta, const Frame& frame,
                           const WorkingQuantities& wq);

// P(tau) = sum_c tau_c K_c; a zero matrix for unpenalized blocks.
Eigen::MatrixXd penalty_matrix(const DesignBlock& block, const Eigen::VectorXd& tau);

struct PenalizedSolution {
  Eigen::VectorXd beta;
  bool ridge = false;  // the ridge fallback was needed
};

// Solves (X'WX + P) beta = X'W(z - eta_{-j}) by Cholesky.
PenalizedSolution solve_penalized(const NormalEquations& ne, const Eigen::MatrixXd& penalty);

// trace((X'WX + P)^{-1} X'WX).
double edf(const NormalEquations& ne, const Eigen::MatrixXd& penalty);

// -2 loglik + 2 edf.
double aic(double loglik_value, double total_edf);

struct UpdateInfo {
  bool ridge = false;
  double edf = 0.0;
};

// One backfitting step for term j on the frame: recomputes the working
// quantities at eta, solves the penalized normal equations with state.tau[j],
// stores the result in state.beta[j] and updates eta incrementally.
UpdateInfo backfit_update(const std::vector<DesignBlock>& blocks, std::size_t j, ModelState& state,
                          const Frame& frame, Eigen::VectorXd& eta);

}  // namespace dhazard
