#include "dhazard/model_core.hpp"

#include <cmath>
#include <string>

#include "dhazard/error.hpp"

namespace dhazard {

namespace {

// log(1 + exp(x))
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double inverse_link(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log_inverse_link(double eta) { return -softplus(-eta); }
double log1m_inverse_link(double eta) { return -softplus(eta); }

std::vector<double> survival_curve(std::span<const double> hazard) {
  std::vector<double> s;
  s.reserve(hazard.size());
  double prod = 1.0;
  for (std::size_t t = 0; t < hazard.size(); ++t) {
    const double h = hazard[t];
    if (!(h >= 0.0 && h <= 1.0)) {
      throw DomainError("survival_curve: hazard at t = " + std::to_string(t + 1) + " is outside [0, 1]");
    }
    prod *= 1.0 - h;
    s.push_back(prod);
  }
  return s;
}

double loglik(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::VectorXd>& eta) {
  if (y.size() != eta.size()) {
    throw DimensionError("loglik: y has " + std::to_string(y.size()) + " rows, eta has " +
                         std::to_string(eta.size()));
  }
  double sum = 0.0;
  for (Eigen::Index r = 0; r < y.size(); ++r) sum += y(r) * eta(r) - softplus(eta(r));
  return sum;
}

WorkingQuantities score_weights(const Eigen::Ref<const Eigen::VectorXd>& y,
                                const Eigen::Ref<const Eigen::VectorXd>& eta) {
  if (y.size() != eta.size()) throw DimensionError("score_weights: length mismatch");
  WorkingQuantities wq;
  wq.u.resize(y.size());
  wq.w.resize(y.size());
  wq.z.resize(y.size());
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    const double h = inverse_link(eta(r));
    wq.u(r) = y(r) - h;
    wq.w(r) = std::max(h * (1.0 - h), kWeightFloor);
    wq.z(r) = eta(r) + wq.u(r) / wq.w(r);
  }
  return wq;
}

bool ModelState::operator==(const ModelState& other) const {
  if (beta.size() != other.beta.size() || tau.size() != other.tau.size()) return false;
  for (std::size_t j = 0; j < beta.size(); ++j) {
    if (beta[j].size() != other.beta[j].size() || beta[j] != other.beta[j]) return false;
  }
  for (std::size_t j = 0; j < tau.size(); ++j) {
    if (tau[j].size() != other.tau[j].size() || tau[j] != other.tau[j]) return false;
  }
  return true;
}

ModelState initial_state(const std::vector<DesignBlock>& blocks, double tau0) {
  ModelState s;
  for (const auto& b : blocks) {
    s.beta.push_back(Eigen::VectorXd::Zero(b.dim()));
    s.tau.push_back(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(b.num_penalties()), tau0));
  }
  return s;
}

Frame::Frame(const AugmentedDataset& data, const Batch& batch)
    : horizon_(data.horizon()), individuals_(batch.individuals) {
  row_local_.reserve(batch.row_count);
  row_time_.reserve(batch.row_count);
  y_.resize(static_cast<Eigen::Index>(batch.row_count));
  std::size_t r = 0;
  for (std::size_t l = 0; l < individuals_.size(); ++l) {
    const RowRange b = data.block(individuals_[l]);
    for (std::size_t row = b.begin; row < b.end; ++row, ++r) {
      row_local_.push_back(static_cast<std::uint32_t>(l));
      row_time_.push_back(data.row_time(row));
      y_(static_cast<Eigen::Index>(r)) = data.row_y(row);
    }
  }
  if (r != batch.row_count) throw DimensionError("Frame: batch row_count does not match its individuals");
  if (data.total_rows() > 0) share_ = static_cast<double>(r) / static_cast<double>(data.total_rows());
}

Eigen::MatrixXd local_basis(const DesignBlock& block, const Frame& frame) {
  if (block.key == KeyKind::time) return block.basis;
  const auto ids = frame.individuals();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), block.basis.cols());
  for (std::size_t l = 0; l < ids.size(); ++l) {
    out.row(static_cast<Eigen::Index>(l)) = block.basis.row(ids[l]);
  }
  return out;
}

Eigen::VectorXd term_values(const DesignBlock& block, const Eigen::VectorXd& beta, const Frame& frame) {
  if (block.key == KeyKind::time) return block.basis * beta;
  const auto ids = frame.individuals();
  Eigen::VectorXd out(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t l = 0; l < ids.size(); ++l) {
    out(static_cast<Eigen::Index>(l)) = block.basis.row(ids[l]).dot(beta);
  }
  return out;
}

void add_to_rows(const DesignBlock& block, const Eigen::VectorXd& key_values, const Frame& frame,
                 Eigen::VectorXd& eta, double scale) {
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    eta(static_cast<Eigen::Index>(r)) += scale * key_values(static_cast<Eigen::Index>(frame.local_key(block.key, r)));
  }
}

Eigen::VectorXd predictor(const std::vector<DesignBlock>& blocks, const ModelState& state, const Frame& frame) {
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(frame.rows()));
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    add_to_rows(blocks[j], term_values(blocks[j], state.beta[j], frame), frame, eta);
  }
  return eta;
}

NormalEquations accumulate(const DesignBlock& block, const Eigen::VectorXd& beta, const Frame& frame,
                           const WorkingQuantities& wq) {
  const auto keys = static_cast<Eigen::Index>(frame.num_keys(block.key));
  const Eigen::VectorXd f = term_values(block, beta, frame);
  // Rows sharing a key share a design row, so sums over rows collapse to sums over keys.
  // w (z - eta_{-j}) = w f_j + u on every row.
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(keys);
  Eigen::VectorXd usum = Eigen::VectorXd::Zero(keys);
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    const auto k = static_cast<Eigen::Index>(frame.local_key(block.key, r));
    wsum(k) += wq.w(static_cast<Eigen::Index>(r));
    usum(k) += wq.u(static_cast<Eigen::Index>(r));
  }
  const Eigen::MatrixXd b = local_basis(block, frame);
  NormalEquations ne;
  ne.xtwx = b.transpose() * (b.array().colwise() * wsum.array()).matrix();
  ne.xtwr = b.transpose() * (wsum.cwiseProduct(f) + usum);
  ne.penalty_scale = frame.share();
  return ne;
}

Eigen::MatrixXd penalty_matrix(const DesignBlock& block, const Eigen::VectorXd& tau) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(block.dim(), block.dim());
  if (static_cast<std::size_t>(tau.size()) != block.num_penalties()) {
    throw DimensionError("penalty_matrix: term '" + block.term.name + "' expects " +
                         std::to_string(block.num_penalties()) + " smoothing parameter(s)");
  }
  for (std::size_t c = 0; c < block.num_penalties(); ++c) {
    p += tau(static_cast<Eigen::Index>(c)) * block.penalties[c];
  }
  return p;
}

namespace {

// Cholesky of X'WX + P, with the ridge fallback for singular systems.
Eigen::LLT<Eigen::MatrixXd> factorize(const NormalEquations& ne, const Eigen::MatrixXd& penalty, bool& ridge) {
  Eigen::MatrixXd a = ne.xtwx + ne.penalty_scale * penalty;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  ridge = false;
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-14) return llt;
  ridge = true;
  a.diagonal().array() += kRidgeFallback;
  llt.compute(a);
  if (llt.info() != Eigen::Success) throw DomainError("penalized normal equations are not positive definite");
  return llt;
}

}  // namespace

PenalizedSolution solve_penalized(const NormalEquations& ne, const Eigen::MatrixXd& penalty) {
  PenalizedSolution out;
  const auto llt = factorize(ne, penalty, out.ridge);
  out.beta = llt.solve(ne.xtwr);
  return out;
}

double edf(const NormalEquations& ne, const Eigen::MatrixXd& penalty) {
  bool ridge = false;
  const auto llt = factorize(ne, penalty, ridge);
  return llt.solve(ne.xtwx).trace();
}

double aic(double loglik_value, double total_edf) { return -2.0 * loglik_value + 2.0 * total_edf; }

UpdateInfo backfit_update(const std::vector<DesignBlock>& blocks, std::size_t j, ModelState& state,
                          const Frame& frame, Eigen::VectorXd& eta) {
  const DesignBlock& block = blocks.at(j);
  const WorkingQuantities wq = score_weights(frame.y(), eta);
  const NormalEquations ne = accumulate(block, state.beta[j], frame, wq);
  const Eigen::MatrixXd p = penalty_matrix(block, state.tau[j]);
  const PenalizedSolution sol = solve_penalized(ne, p);

  add_to_rows(block, term_values(block, sol.beta - state.beta[j], frame), frame, eta);
  state.beta[j] = sol.beta;
  return {sol.ridge, edf(ne, p)};
}

}  // namespace dhazard
