#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dhazard/survival_data.hpp"

namespace dhazard {

enum class TermKind { baseline_smooth, univariate_smooth, bivariate_smooth, linear, categorical };

std::string_view to_string(TermKind kind);
TermKind parse_term_kind(std::string_view text);

// Declarative description of one additive term f_j.
struct TermSpec {
  std::string name;
  TermKind kind = TermKind::univariate_smooth;
  // Covariate names: none for the baseline, two for bivariate smooths, one otherwise.
  std::vector<std::string> columns;
  int basis_dim = 10;  // per margin for bivariate smooths
  int degree = 3;
  int penalty_order = 2;

  bool is_smooth() const {
    return kind == TermKind::baseline_smooth || kind == TermKind::univariate_smooth ||
           kind == TermKind::bivariate_smooth;
  }
  void validate() const;
};

// Clamped, equidistant knot sequence over [lo, hi]: degree + 1 repeated
// boundary knots and dim - degree equal intervals.
struct SplineKnots {
  double lo = 0.0;
  double hi = 1.0;
  int dim = 10;
  int degree = 3;

  std::vector<double> knots() const;
};

// Knots spanning the observed range of x. Throws DegenerateInputError when x
// has fewer than two distinct values.
SplineKnots make_knots(std::span<const double> x, int dim, int degree);

// One row per x value; values outside [lo, hi] are clamped to the boundary.
Eigen::MatrixXd bspline_basis(std::span<const double> x, const SplineKnots& knots);
Eigen::MatrixXd bspline_basis(std::span<const double> x, int dim, int degree);

// K = D'D with D the order-th difference operator on dim coefficients.
Eigen::MatrixXd difference_penalty(int dim, int order);

// Row-wise Kronecker product: row r of the result is kron(a.row(r), b.row(r)).
Eigen::MatrixXd row_kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct TensorParts {
  Eigen::MatrixXd design;
  Eigen::MatrixXd penalty_x;  // Kx (x) I
  Eigen::MatrixXd penalty_y;  // I (x) Ky
};

TensorParts tensor_product(const Eigen::MatrixXd& bx, const Eigen::MatrixXd& by,
                           const Eigen::MatrixXd& kx, const Eigen::MatrixXd& ky);

// Which quantity a block's rows are indexed by. Baseline terms depend on the
// interval t only; covariate terms depend on the individual only.
enum class KeyKind { time, individual };

// Identifiability reparameterization of a block.
struct Centering {
  enum class Mode { none, shift, project };
  Mode mode = Mode::none;
  Eigen::RowVectorXd shift;    // subtracted from every raw row (shift mode)
  Eigen::MatrixXd projection;  // raw_dim x dim, columns orthogonal to the constraint (project mode)

  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

// Maps raw term inputs (one column per input variable) to uncentered design rows.
struct TermEncoder {
  TermKind kind = TermKind::linear;
  std::vector<SplineKnots> margins;
  std::size_t levels = 0;  // categorical only

  Eigen::MatrixXd raw(const Eigen::MatrixXd& inputs) const;
  int raw_dim() const;
};

// Design and penalty structure for one term. Rows of `basis` correspond to
// keys (time points 1..k or individuals); the N x d design on augmented rows
// is basis.row(key(row)) and is only materialized on request.
struct DesignBlock {
  TermSpec term;
  KeyKind key = KeyKind::individual;
  std::vector<std::size_t> columns;  // covariate indices feeding the encoder
  TermEncoder encoder;
  Centering centering;
  Eigen::MatrixXd basis;
  Eigen::VectorXd key_weights;  // augmented-row multiplicity of each key
  std::vector<Eigen::MatrixXd> penalties;

  int dim() const { return static_cast<int>(basis.cols()); }
  bool penalized() const { return !penalties.empty(); }
  std::size_t num_penalties() const { return penalties.size(); }

  // Encoder followed by the block's centering.
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& inputs) const;
  std::size_t key_of_row(const AugmentedDataset& data, std::size_t row) const {
    return key == KeyKind::time ? static_cast<std::size_t>(data.row_time(row) - 1)
                                : data.row_individual(row);
  }
  Eigen::MatrixXd dense(const AugmentedDataset& data) const;
};

// Uncentered block for one term.
DesignBlock make_block(const TermSpec& spec, const AugmentedDataset& data);

// Reparameterizes the block so its columns sum to zero over augmented rows.
// Blocks that are already centered are returned unchanged.
DesignBlock center_block(const DesignBlock& block);

// All blocks of a model. Exactly one baseline term is required; it carries the
// intercept and stays uncentered, every other block is centered.
std::vector<DesignBlock> build_design(std::span<const TermSpec> terms, const AugmentedDataset& data);

// Raw inputs of every key of a block: time points 1..k, or the covariate
// values of each individual.
Eigen::MatrixXd key_inputs(const TermSpec& spec, const std::vector<std::size_t>& columns,
                           const AugmentedDataset& data);

}  // namespace dhazard
