#include "dhazard/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "dhazard/csv.hpp"
#include "dhazard/error.hpp"
#include "json.hpp"

namespace dhazard {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(vec_json(m.row(r).transpose()));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd mat_from(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto row = data.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != m.cols()) throw ValidationError("model: malformed matrix");
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

std::string_view centering_name(Centering::Mode m) {
  switch (m) {
    case Centering::Mode::none: return "none";
    case Centering::Mode::shift: return "shift";
    case Centering::Mode::project: return "project";
  }
  return "none";
}

Centering::Mode centering_mode(const std::string& s) {
  if (s == "none") return Centering::Mode::none;
  if (s == "shift") return Centering::Mode::shift;
  if (s == "project") return Centering::Mode::project;
  throw ValidationError("model: unknown centering mode '" + s + "'");
}

}  // namespace

HazardModel HazardModel::from_fit(const std::vector<DesignBlock>& blocks, const ModelState& state,
                                  const FitReport& report, const AugmentedDataset& data, const PersonData& person) {
  HazardModel m;
  m.horizon_ = data.horizon();
  m.seed_ = report.seed;
  m.covariates_ = data.covariates();
  const std::size_t p = m.covariates_.size();
  m.reference_.assign(p, 0.0);
  m.ranges_.assign(p, {0.0, 0.0});
  for (std::size_t c = 0; c < p; ++c) {
    const auto col = data.covariate_column(c);
    if (!col.empty()) {
      const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
      m.ranges_[c] = {*mn, *mx};
    }
    // Reference values come from person-level records, one per individual.
    if (m.covariates_[c].kind == CovariateKind::categorical) {
      std::vector<std::size_t> counts(m.covariates_[c].levels.size(), 0);
      for (const auto& r : person.records) ++counts.at(static_cast<std::size_t>(r.covariates[c]));
      m.reference_[c] = static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    } else {
      double sum = 0.0;
      for (const auto& r : person.records) sum += r.covariates[c];
      m.reference_[c] = person.records.empty() ? 0.0 : sum / static_cast<double>(person.records.size());
    }
  }
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    FittedTerm t;
    t.term = blocks[j].term;
    t.key = blocks[j].key;
    t.columns = blocks[j].columns;
    t.encoder = blocks[j].encoder;
    t.centering = blocks[j].centering;
    t.beta = state.beta[j];
    t.tau = state.tau[j];
    t.selected = j < report.terms.size() ? report.terms[j].selected : true;
    m.terms_.push_back(std::move(t));
  }
  return m;
}

std::size_t HazardModel::covariate_index(const std::string& name) const {
  for (std::size_t c = 0; c < covariates_.size(); ++c) {
    if (covariates_[c].name == name) return c;
  }
  throw ValidationError("unknown covariate '" + name + "'");
}

Eigen::MatrixXd HazardModel::predictor(const Eigen::MatrixXd& covariates) const {
  if (covariates.cols() != static_cast<Eigen::Index>(covariates_.size())) {
    throw DimensionError("predictor: expected " + std::to_string(covariates_.size()) + " covariate columns");
  }
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(covariates.rows(), horizon_);
  for (const auto& t : terms_) {
    if (t.key == KeyKind::time) {
      Eigen::MatrixXd times(horizon_, 1);
      for (int s = 0; s < horizon_; ++s) times(s, 0) = s + 1;
      const Eigen::VectorXd f = t.centering.apply(t.encoder.raw(times)) * t.beta;
      eta.rowwise() += f.transpose();
    } else {
      Eigen::MatrixXd inputs(covariates.rows(), static_cast<Eigen::Index>(t.columns.size()));
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        inputs.col(static_cast<Eigen::Index>(c)) = covariates.col(static_cast<Eigen::Index>(t.columns[c]));
      }
      const Eigen::VectorXd f = t.centering.apply(t.encoder.raw(inputs)) * t.beta;
      eta.colwise() += f;
    }
  }
  return eta;
}

Eigen::MatrixXd HazardModel::hazard(const Eigen::MatrixXd& covariates) const {
  return predictor(covariates).unaryExpr([](double e) { return inverse_link(e); });
}

Eigen::MatrixXd HazardModel::survival(const Eigen::MatrixXd& covariates) const {
  const Eigen::MatrixXd h = hazard(covariates);
  Eigen::MatrixXd s(h.rows(), h.cols());
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    const Eigen::VectorXd row = h.row(r).transpose();
    const auto curve = survival_curve({row.data(), static_cast<std::size_t>(row.size())});
    for (Eigen::Index t = 0; t < h.cols(); ++t) s(r, t) = curve[static_cast<std::size_t>(t)];
  }
  return s;
}

Eigen::MatrixXd HazardModel::profile_grid(const std::string& covariate, std::span<const double> grid) const {
  const auto c = static_cast<Eigen::Index>(covariate_index(covariate));
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(reference_.size()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index k = 0; k < rows.cols(); ++k) rows(r, k) = reference_[static_cast<std::size_t>(k)];
    rows(r, c) = grid[static_cast<std::size_t>(r)];
  }
  return rows;
}

std::vector<double> HazardModel::default_grid(const std::string& covariate, int points) const {
  const std::size_t c = covariate_index(covariate);
  std::vector<double> g;
  if (covariates_[c].kind == CovariateKind::categorical) {
    for (std::size_t l = 0; l < covariates_[c].levels.size(); ++l) g.push_back(static_cast<double>(l));
    return g;
  }
  const auto [lo, hi] = ranges_[c];
  if (points < 2) return {reference_[c]};
  for (int i = 0; i < points; ++i) g.push_back(i + 1 == points ? hi : lo + (hi - lo) * i / (points - 1));
  return g;
}

std::string HazardModel::to_json() const {
  json j;
  j["format"] = "dhazard-model";
  j["version"] = kModelFormatVersion;
  j["horizon"] = horizon_;
  j["seed"] = seed_;
  json covs = json::array();
  for (std::size_t c = 0; c < covariates_.size(); ++c) {
    const auto& info = covariates_[c];
    covs.push_back({{"name", info.name},
                    {"kind", info.kind == CovariateKind::categorical ? "categorical" : "continuous"},
                    {"levels", info.levels},
                    {"range", {ranges_[c].first, ranges_[c].second}},
                    {"reference", reference_[c]}});
  }
  j["covariates"] = covs;
  json terms = json::array();
  for (const auto& t : terms_) {
    json margins = json::array();
    for (const auto& k : t.encoder.margins) {
      margins.push_back({{"lo", k.lo}, {"hi", k.hi}, {"dim", k.dim}, {"degree", k.degree}});
    }
    json centering = {{"mode", centering_name(t.centering.mode)}};
    if (t.centering.mode == Centering::Mode::shift) centering["shift"] = vec_json(t.centering.shift.transpose());
    if (t.centering.mode == Centering::Mode::project) centering["projection"] = mat_json(t.centering.projection);
    terms.push_back({{"name", t.term.name},
                     {"kind", to_string(t.term.kind)},
                     {"columns", t.term.columns},
                     {"basis_dim", t.term.basis_dim},
                     {"degree", t.term.degree},
                     {"penalty_order", t.term.penalty_order},
                     {"selected", t.selected},
                     {"margins", margins},
                     {"levels", t.encoder.levels},
                     {"centering", centering},
                     {"beta", vec_json(t.beta)},
                     {"tau", vec_json(t.tau)}});
  }
  j["terms"] = terms;
  j["config"] = json::parse(config_json);
  return j.dump(2);
}

HazardModel HazardModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != "dhazard-model") throw ValidationError("model: not a dhazard model file");
  const int version = j.value("version", -1);
  if (version != kModelFormatVersion) {
    throw ValidationError("model: unsupported format version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelFormatVersion) + ")");
  }
  try {
    HazardModel m;
    m.horizon_ = j.at("horizon").get<int>();
    m.seed_ = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("covariates")) {
      CovariateInfo info;
      info.name = c.at("name").get<std::string>();
      info.kind = c.at("kind").get<std::string>() == "categorical" ? CovariateKind::categorical
                                                                   : CovariateKind::continuous;
      info.levels = c.at("levels").get<std::vector<std::string>>();
      m.covariates_.push_back(std::move(info));
      m.ranges_.emplace_back(c.at("range").at(0).get<double>(), c.at("range").at(1).get<double>());
      m.reference_.push_back(c.at("reference").get<double>());
    }
    for (const auto& t : j.at("terms")) {
      FittedTerm f;
      f.term.name = t.at("name").get<std::string>();
      f.term.kind = parse_term_kind(t.at("kind").get<std::string>());
      f.term.columns = t.at("columns").get<std::vector<std::string>>();
      f.term.basis_dim = t.at("basis_dim").get<int>();
      f.term.degree = t.at("degree").get<int>();
      f.term.penalty_order = t.at("penalty_order").get<int>();
      f.selected = t.at("selected").get<bool>();
      f.key = f.term.kind == TermKind::baseline_smooth ? KeyKind::time : KeyKind::individual;
      for (const auto& name : f.term.columns) f.columns.push_back(m.covariate_index(name));
      f.encoder.kind = f.term.kind;
      f.encoder.levels = t.at("levels").get<std::size_t>();
      for (const auto& k : t.at("margins")) {
        f.encoder.margins.push_back(
            {k.at("lo").get<double>(), k.at("hi").get<double>(), k.at("dim").get<int>(), k.at("degree").get<int>()});
      }
      const auto& c = t.at("centering");
      f.centering.mode = centering_mode(c.at("mode").get<std::string>());
      if (f.centering.mode == Centering::Mode::shift) f.centering.shift = vec_from(c.at("shift")).transpose();
      if (f.centering.mode == Centering::Mode::project) f.centering.projection = mat_from(c.at("projection"));
      f.beta = vec_from(t.at("beta"));
      f.tau = vec_from(t.at("tau"));
      m.terms_.push_back(std::move(f));
    }
    m.config_json = j.contains("config") ? j.at("config").dump() : "{}";
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model: malformed file: ") + e.what());
  }
}

void HazardModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << to_json() << '\n';
}

HazardModel HazardModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

PredictMode parse_predict_mode(const std::string& text) {
  if (text == "hazard") return PredictMode::hazard;
  if (text == "survival") return PredictMode::survival;
  if (text == "marginal_survival") return PredictMode::marginal_survival;
  throw ValidationError("unknown prediction mode '" + text + "' (hazard, survival, marginal_survival)");
}

void write_predictions(std::ostream& out, const HazardModel& model, PredictMode mode, const Eigen::MatrixXd& rows,
                       const std::vector<std::string>& label_names, const std::vector<std::vector<std::string>>& labels,
                       std::span<const int> times) {
  for (int t : times) {
    const int lo = mode == PredictMode::hazard ? 1 : 0;
    if (t < lo || t > model.horizon()) {
      throw ValidationError("time " + std::to_string(t) + " is outside " + std::to_string(lo) + ".." +
                            std::to_string(model.horizon()));
    }
  }
  const Eigen::MatrixXd values = mode == PredictMode::hazard ? model.hazard(rows) : model.survival(rows);
  std::vector<std::string> header = label_names;
  header.push_back("t");
  header.push_back(mode == PredictMode::hazard ? "hazard" : "survival");
  csv::write_row(out, header);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (int t : times) {
      std::vector<std::string> row = labels.at(static_cast<std::size_t>(r));
      row.push_back(std::to_string(t));
      row.push_back(csv::format_double(t == 0 ? 1.0 : values(r, t - 1)));
      csv::write_row(out, row);
    }
  }
}

std::string fit_report_json(const FitReport& report, const ModelState& state, const std::string& config_json) {
  json j;
  j["seed"] = report.seed;
  j["early_stopped"] = report.early_stopped;
  j["boosting_iterations_run"] = report.boosting.size();
  j["refit_iterations_run"] = report.refit.size();
  json terms = json::array();
  for (std::size_t t = 0; t < report.terms.size(); ++t) {
    const auto& s = report.terms[t];
    terms.push_back({{"name", s.name},
                     {"selected", s.selected},
                     {"updates", s.updates},
                     {"frequency", s.frequency},
                     {"contribution", s.contribution},
                     {"tau", vec_json(s.tau)},
                     {"ridge_fallbacks", s.ridge_fallbacks},
                     {"beta", t < state.beta.size() ? vec_json(state.beta[t]) : json::array()}});
  }
  j["terms"] = terms;
  auto trace = [](const std::vector<IterationRecord>& recs) {
    json a = json::array();
    for (const auto& r : recs) {
      a.push_back({{"iteration", r.iteration},
                   {"winner", r.winner},
                   {"best", r.best},
                   {"improvement", r.improvement},
                   {"oob_loglik", r.oob_loglik},
                   {"fit_seed", r.fit_seed},
                   {"eval_seed", r.eval_seed},
                   {"fit_rows", r.fit_rows},
                   {"eval_rows", r.eval_rows},
                   {"ridge", r.ridge}});
    }
    return a;
  };
  j["boosting"] = trace(report.boosting);
  j["refit"] = trace(report.refit);
  j["timing"] = {{"boosting_seconds", report.boosting_seconds}, {"refit_seconds", report.refit_seconds}};
  j["config"] = json::parse(config_json);
  return j.dump(2);
}

std::string engine_config_json(const EngineConfig& e) {
  const json j{{"boost_iterations", e.boost_iterations},
               {"step", e.step},
               {"refit_iterations", e.refit_iterations},
               {"burn_in", e.burn_in},
               {"batch_rows", e.batch_rows},
               {"seed", e.seed},
               {"select", e.select},
               {"rule", to_string(e.rule)},
               {"stop_tolerance", e.stop_tolerance},
               {"stop_patience", e.stop_patience},
               {"tau",
                {{"enabled", e.tau.enabled},
                 {"initial", e.tau.initial},
                 {"log10_min", e.tau.log10_min},
                 {"log10_max", e.tau.log10_max},
                 {"half_width", e.tau.half_width},
                 {"points", e.tau.points},
                 {"passes", e.tau.passes}}}};
  return j.dump();
}

void write_trajectories_csv(std::ostream& out, const FitReport& report) {
  csv::write_row(out, {"iteration", "term", "index", "value"});
  for (std::size_t l = 0; l < report.trajectories.size(); ++l) {
    const auto& betas = report.trajectories[l];
    for (std::size_t t = 0; t < betas.size(); ++t) {
      if (t < report.terms.size() && !report.terms[t].selected) continue;
      for (Eigen::Index k = 0; k < betas[t].size(); ++k) {
        csv::write_row(out, {std::to_string(l), t < report.terms.size() ? report.terms[t].name : std::to_string(t),
                             std::to_string(k), csv::format_double(betas[t](k))});
      }
    }
  }
}

}  // namespace dhazard
