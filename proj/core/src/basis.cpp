#include "dhazard/basis.hpp"

#include <algorithm>
#include <cmath>

#include "dhazard/error.hpp"

namespace dhazard {

std::string_view to_string(TermKind kind) {
  switch (kind) {
    case TermKind::baseline_smooth: return "baseline_smooth";
    case TermKind::univariate_smooth: return "univariate_smooth";
    case TermKind::bivariate_smooth: return "bivariate_smooth";
    case TermKind::linear: return "linear";
    case TermKind::categorical: return "categorical";
  }
  return "unknown";
}

TermKind parse_term_kind(std::string_view text) {
  for (auto k : {TermKind::baseline_smooth, TermKind::univariate_smooth, TermKind::bivariate_smooth,
                 TermKind::linear, TermKind::categorical}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown term kind '" + std::string(text) + "'");
}

void TermSpec::validate() const {
  const std::string where = "term '" + name + "': ";
  std::size_t expected = 1;
  if (kind == TermKind::baseline_smooth) expected = 0;
  if (kind == TermKind::bivariate_smooth) expected = 2;
  if (columns.size() != expected) {
    throw ConfigError(where + "expects " + std::to_string(expected) + " input column(s), got " +
                      std::to_string(columns.size()));
  }
  if (!is_smooth()) return;
  if (degree < 0) throw ConfigError(where + "degree must be >= 0");
  if (penalty_order < 1) throw ConfigError(where + "penalty_order must be >= 1");
  if (basis_dim < penalty_order + degree || basis_dim < degree + 1 || basis_dim <= penalty_order) {
    throw ConfigError(where + "basis_dim must be >= penalty_order + degree");
  }
}

std::vector<double> SplineKnots::knots() const {
  const int intervals = dim - degree;
  const double h = (hi - lo) / intervals;
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(dim + degree + 1));
  for (int i = 0; i < degree; ++i) t.push_back(lo);
  for (int i = 0; i <= intervals; ++i) t.push_back(i == intervals ? hi : lo + h * i);
  for (int i = 0; i < degree; ++i) t.push_back(hi);
  return t;
}

SplineKnots make_knots(std::span<const double> x, int dim, int degree) {
  if (degree < 0 || dim < degree + 1) throw DimensionError("bspline: need dim >= degree + 1");
  if (x.empty()) throw DegenerateInputError("bspline: no input values");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  if (!std::isfinite(*mn) || !std::isfinite(*mx)) throw DegenerateInputError("bspline: non-finite input");
  if (!(*mx > *mn)) throw DegenerateInputError("bspline: fewer than 2 distinct input values");
  return {*mn, *mx, dim, degree};
}

Eigen::MatrixXd bspline_basis(std::span<const double> x, const SplineKnots& spec) {
  const int p = spec.degree;
  const int dim = spec.dim;
  if (p < 0 || dim < p + 1) throw DimensionError("bspline: need dim >= degree + 1");
  const std::vector<double> t = spec.knots();

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), dim);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  std::vector<double> basis(static_cast<std::size_t>(p + 1));

  for (std::size_t r = 0; r < x.size(); ++r) {
    if (!std::isfinite(x[r])) throw DegenerateInputError("bspline: non-finite input");
    const double u = std::clamp(x[r], spec.lo, spec.hi);
    // Knot span: t[span] <= u < t[span + 1], with the right end folded into the last span.
    int span = dim - 1;
    if (u < spec.hi) {
      auto it = std::upper_bound(t.begin() + p, t.begin() + dim + 1, u);
      span = static_cast<int>(it - t.begin()) - 1;
    }
    // Cox-de Boor triangle for the p + 1 nonzero functions.
    basis[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = u - t[span + 1 - j];
      right[j] = t[span + j] - u;
      double saved = 0.0;
      for (int k = 0; k < j; ++k) {
        const double denom = right[k + 1] + left[j - k];
        const double temp = denom == 0.0 ? 0.0 : basis[k] / denom;
        basis[k] = saved + right[k + 1] * temp;
        saved = left[j - k] * temp;
      }
      basis[j] = saved;
    }
    for (int k = 0; k <= p; ++k) out(static_cast<Eigen::Index>(r), span - p + k) = basis[k];
  }
  return out;
}

Eigen::MatrixXd bspline_basis(std::span<const double> x, int dim, int degree) {
  return bspline_basis(x, make_knots(x, dim, degree));
}

Eigen::MatrixXd difference_penalty(int dim, int order) {
  if (order < 0 || dim <= order) {
    throw DimensionError("difference_penalty: need dim > order (dim = " + std::to_string(dim) +
                         ", order = " + std::to_string(order) + ")");
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(dim, dim);
  for (int k = 0; k < order; ++k) {
    d = (d.bottomRows(d.rows() - 1) - d.topRows(d.rows() - 1)).eval();
  }
  return d.transpose() * d;
}

Eigen::MatrixXd row_kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("row_kronecker: row counts differ (" + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    out.middleCols(i * b.cols(), b.cols()) = b.array().colwise() * a.col(i).array();
  }
  return out;
}

TensorParts tensor_product(const Eigen::MatrixXd& bx, const Eigen::MatrixXd& by,
                           const Eigen::MatrixXd& kx, const Eigen::MatrixXd& ky) {
  if (kx.rows() != bx.cols() || kx.cols() != bx.cols() || ky.rows() != by.cols() || ky.cols() != by.cols()) {
    throw DimensionError("tensor_product: penalty dimensions do not match the marginal bases");
  }
  TensorParts parts;
  parts.design = row_kronecker(bx, by);
  const Eigen::Index dx = bx.cols();
  const Eigen::Index dy = by.cols();
  parts.penalty_x = Eigen::MatrixXd::Zero(dx * dy, dx * dy);
  parts.penalty_y = Eigen::MatrixXd::Zero(dx * dy, dx * dy);
  for (Eigen::Index i = 0; i < dx; ++i) {
    for (Eigen::Index k = 0; k < dx; ++k) {
      parts.penalty_x.block(i * dy, k * dy, dy, dy).diagonal().setConstant(kx(i, k));
    }
    parts.penalty_y.block(i * dy, i * dy, dy, dy) = ky;
  }
  return parts;
}

Eigen::MatrixXd Centering::apply(const Eigen::MatrixXd& raw) const {
  switch (mode) {
    case Mode::none: return raw;
    case Mode::shift: return raw.rowwise() - shift;
    case Mode::project: return raw * projection;
  }
  return raw;
}

Eigen::MatrixXd TermEncoder::raw(const Eigen::MatrixXd& inputs) const {
  auto column = [&](Eigen::Index c) {
    return std::span<const double>(inputs.col(c).data(), static_cast<std::size_t>(inputs.rows()));
  };
  switch (kind) {
    case TermKind::baseline_smooth:
    case TermKind::univariate_smooth:
      return bspline_basis(column(0), margins.at(0));
    case TermKind::bivariate_smooth:
      return row_kronecker(bspline_basis(column(0), margins.at(0)), bspline_basis(column(1), margins.at(1)));
    case TermKind::linear:
      return inputs.leftCols(1);
    case TermKind::categorical: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(inputs.rows(), static_cast<Eigen::Index>(levels));
      for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        const double v = inputs(r, 0);
        if (!(v >= 0.0) || v >= static_cast<double>(levels) || v != std::floor(v)) {
          throw ValidationError("categorical input " + std::to_string(v) + " is not a valid level index");
        }
        out(r, static_cast<Eigen::Index>(v)) = 1.0;
      }
      return out;
    }
  }
  return {};
}

int TermEncoder::raw_dim() const {
  switch (kind) {
    case TermKind::baseline_smooth:
    case TermKind::univariate_smooth: return margins.at(0).dim;
    case TermKind::bivariate_smooth: return margins.at(0).dim * margins.at(1).dim;
    case TermKind::linear: return 1;
    case TermKind::categorical: return static_cast<int>(levels);
  }
  return 0;
}

Eigen::MatrixXd DesignBlock::evaluate(const Eigen::MatrixXd& inputs) const {
  return centering.apply(encoder.raw(inputs));
}

Eigen::MatrixXd DesignBlock::dense(const AugmentedDataset& data) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.total_rows()), basis.cols());
  for (std::size_t r = 0; r < data.total_rows(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = basis.row(static_cast<Eigen::Index>(key_of_row(data, r)));
  }
  return out;
}

Eigen::MatrixXd key_inputs(const TermSpec& spec, const std::vector<std::size_t>& columns,
                           const AugmentedDataset& data) {
  if (spec.kind == TermKind::baseline_smooth) {
    Eigen::MatrixXd t(data.horizon(), 1);
    for (int s = 0; s < data.horizon(); ++s) t(s, 0) = s + 1;
    return t;
  }
  const auto n = static_cast<Eigen::Index>(data.num_individuals());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto col = data.covariate_column(columns[c]);
    x.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
  }
  return x;
}

DesignBlock make_block(const TermSpec& spec, const AugmentedDataset& data) {
  spec.validate();
  DesignBlock block;
  block.term = spec;
  block.key = spec.kind == TermKind::baseline_smooth ? KeyKind::time : KeyKind::individual;
  block.encoder.kind = spec.kind;

  for (const auto& name : spec.columns) {
    const auto& info = data.covariates();
    auto it = std::find_if(info.begin(), info.end(), [&](const CovariateInfo& c) { return c.name == name; });
    if (it == info.end()) throw ConfigError("term '" + spec.name + "': unknown covariate '" + name + "'");
    const bool categorical = it->kind == CovariateKind::categorical;
    if (categorical != (spec.kind == TermKind::categorical)) {
      throw ConfigError("term '" + spec.name + "': covariate '" + name + "' is " +
                        (categorical ? "categorical" : "continuous") + " but the term kind is " +
                        std::string(to_string(spec.kind)));
    }
    block.columns.push_back(static_cast<std::size_t>(it - info.begin()));
    if (categorical) block.encoder.levels = it->levels.size();
  }

  const Eigen::MatrixXd inputs = key_inputs(spec, block.columns, data);
  if (spec.kind == TermKind::baseline_smooth) {
    if (data.horizon() < 2) throw DegenerateInputError("baseline term needs a horizon of at least 2");
    block.encoder.margins.push_back({1.0, static_cast<double>(data.horizon()), spec.basis_dim, spec.degree});
  } else if (spec.is_smooth()) {
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
      const std::span<const double> col(inputs.col(c).data(), static_cast<std::size_t>(inputs.rows()));
      try {
        block.encoder.margins.push_back(make_knots(col, spec.basis_dim, spec.degree));
      } catch (const DegenerateInputError& e) {
        throw DegenerateInputError("term '" + spec.name + "': " + e.what());
      }
    }
  } else if (spec.kind == TermKind::categorical && block.encoder.levels < 2) {
    throw DegenerateInputError("term '" + spec.name + "': categorical covariate needs at least 2 levels");
  }

  block.basis = block.encoder.raw(inputs);

  if (block.key == KeyKind::time) {
    block.key_weights.resize(data.horizon());
    for (int s = 0; s < data.horizon(); ++s) {
      block.key_weights(s) = static_cast<double>(data.rows_per_time()[static_cast<std::size_t>(s)]);
    }
  } else {
    block.key_weights.resize(static_cast<Eigen::Index>(data.num_individuals()));
    for (std::size_t i = 0; i < data.num_individuals(); ++i) {
      block.key_weights(static_cast<Eigen::Index>(i)) = data.observed_time(i);
    }
  }

  switch (spec.kind) {
    case TermKind::baseline_smooth:
    case TermKind::univariate_smooth:
      block.penalties.push_back(difference_penalty(spec.basis_dim, spec.penalty_order));
      break;
    case TermKind::bivariate_smooth: {
      const Eigen::MatrixXd k = difference_penalty(spec.basis_dim, spec.penalty_order);
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(spec.basis_dim, spec.basis_dim);
      const auto parts = tensor_product(eye, eye, k, k);
      block.penalties.push_back(parts.penalty_x);
      block.penalties.push_back(parts.penalty_y);
      break;
    }
    case TermKind::linear:
    case TermKind::categorical:
      break;
  }
  return block;
}

DesignBlock center_block(const DesignBlock& block) {
  if (block.centering.mode != Centering::Mode::none) return block;

  const double total = block.key_weights.sum();
  const Eigen::VectorXd colsum = block.basis.transpose() * block.key_weights;
  DesignBlock out = block;
  const double scale = (block.basis.cwiseAbs().transpose() * block.key_weights).maxCoeff();
  if (total <= 0.0 || colsum.norm() <= 1e-13 * std::max(scale, 1.0)) return out;

  if (block.term.kind == TermKind::linear) {
    out.centering.mode = Centering::Mode::shift;
    out.centering.shift = (colsum / total).transpose();
    out.basis = out.centering.apply(block.basis);
    return out;
  }

  // Null space of the single constraint colsum' beta = 0 via Householder QR.
  const Eigen::Index d = block.basis.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(colsum);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  out.centering.mode = Centering::Mode::project;
  out.centering.projection = q.rightCols(d - 1);
  out.basis = block.basis * out.centering.projection;
  for (auto& k : out.penalties) {
    k = out.centering.projection.transpose() * k * out.centering.projection;
    k = (0.5 * (k + k.transpose())).eval();
  }
  return out;
}

std::vector<DesignBlock> build_design(std::span<const TermSpec> terms, const AugmentedDataset& data) {
  const auto baselines = std::count_if(terms.begin(), terms.end(),
                                       [](const TermSpec& t) { return t.kind == TermKind::baseline_smooth; });
  if (baselines != 1) {
    throw ConfigError("the model needs exactly one baseline_smooth term, found " + std::to_string(baselines));
  }
  std::vector<DesignBlock> blocks;
  blocks.reserve(terms.size());
  for (const auto& t : terms) {
    for (const auto& b : blocks) {
      if (b.term.name == t.name) throw ConfigError("duplicate term name '" + t.name + "'");
    }
    DesignBlock b = make_block(t, data);
    if (t.kind != TermKind::baseline_smooth) b = center_block(b);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace dhazard
