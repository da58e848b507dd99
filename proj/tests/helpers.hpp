#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dhazard/basis.hpp"
#include "dhazard/model_core.hpp"
#include "dhazard/random.hpp"
#include "dhazard/survival_data.hpp"

namespace testing {

inline dhazard::IndividualRecord record(const std::string& id, int time, int event, std::vector<double> cov = {}) {
  dhazard::IndividualRecord r;
  r.id = id;
  r.time = time;
  r.event = event;
  r.covariates = std::move(cov);
  return r;
}

// Table 1 of the toy example: four individuals, one covariate.
inline dhazard::PersonData table1() {
  dhazard::PersonData d;
  d.covariates.push_back({"x", dhazard::CovariateKind::continuous, {}});
  d.records = {record("1", 1, 0, {0.3}), record("2", 3, 1, {-1.2}), record("3", 2, 1, {0.8}),
               record("4", 5, 1, {2.0})};
  return d;
}

// Small logistic-hazard data set with continuous covariates x1..xp drawn on
// [-2, 2] and hazard h(-2 + effect(x)).
inline dhazard::PersonData random_person(int n, int p, int horizon, std::uint64_t seed, double effect = 0.8) {
  dhazard::Rng rng(seed);
  dhazard::PersonData d;
  for (int c = 0; c < p; ++c) d.covariates.push_back({"x" + std::to_string(c + 1), dhazard::CovariateKind::continuous, {}});
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(static_cast<std::size_t>(p));
    for (auto& v : x) v = -2.0 + 4.0 * rng.uniform01();
    const double shift = p > 0 ? effect * std::sin(x[0]) : 0.0;
    int t = horizon;
    int ev = 0;
    for (int s = 1; s <= horizon; ++s) {
      if (rng.uniform01() < dhazard::inverse_link(-2.0 - 0.3 * std::log(s) + shift)) {
        t = s;
        ev = 1;
        break;
      }
    }
    d.records.push_back(record(std::to_string(i + 1), t, ev, std::move(x)));
  }
  return d;
}

// Dense stacked design of all blocks on the augmented rows.
inline Eigen::MatrixXd stacked_design(const std::vector<dhazard::DesignBlock>& blocks,
                                      const dhazard::AugmentedDataset& data) {
  int cols = 0;
  for (const auto& b : blocks) cols += b.dim();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.total_rows()), cols);
  int c = 0;
  for (const auto& b : blocks) {
    x.middleCols(c, b.dim()) = b.dense(data);
    c += b.dim();
  }
  return x;
}

// Joint penalized IRLS on the stacked design: the whole-model Newton solve
// the backfitting fixed point must agree with.
inline std::vector<Eigen::VectorXd> joint_irls(const std::vector<dhazard::DesignBlock>& blocks,
                                               const dhazard::AugmentedDataset& data,
                                               const std::vector<Eigen::VectorXd>& tau) {
  const Eigen::MatrixXd x = stacked_design(blocks, data);
  const Eigen::Index p = x.cols();
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(p, p);
  Eigen::Index c = 0;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Eigen::Index d = blocks[j].dim();
    pen.block(c, c, d, d) = dhazard::penalty_matrix(blocks[j], tau[j]);
    c += d;
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.total_rows()));
  for (std::size_t r = 0; r < data.total_rows(); ++r) y(static_cast<Eigen::Index>(r)) = data.row_y(r);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd w(eta.size()), z(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      const double h = 1.0 / (1.0 + std::exp(-eta(r)));
      w(r) = h * (1.0 - h);
      z(r) = eta(r) + (y(r) - h) / w(r);
    }
    const Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x + pen;
    const Eigen::VectorXd next = a.completeOrthogonalDecomposition().solve(x.transpose() * w.cwiseProduct(z));
    const double change = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    if (change < 1e-13) break;
  }
  std::vector<Eigen::VectorXd> out;
  c = 0;
  for (const auto& b : blocks) {
    out.push_back(beta.segment(c, b.dim()));
    c += b.dim();
  }
  return out;
}

// Backfitting with nu = 1 on the complete data until the largest coefficient
// change drops below tol.
inline int backfit_to_convergence(const std::vector<dhazard::DesignBlock>& blocks,
                                  const dhazard::AugmentedDataset& data, dhazard::ModelState& state,
                                  double tol = 1e-8, int max_sweeps = 10000) {
  const dhazard::Frame frame(data, dhazard::full_batch(data));
  Eigen::VectorXd eta = dhazard::predictor(blocks, state, frame);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      const Eigen::VectorXd old = state.beta[j];
      dhazard::backfit_update(blocks, j, state, frame, eta);
      const double scale = std::max(1.0, old.lpNorm<Eigen::Infinity>());
      change = std::max(change, (state.beta[j] - old).lpNorm<Eigen::Infinity>() / scale);
    }
    if (change < tol) return sweep;
  }
  return -1;
}

}  // namespace testing
