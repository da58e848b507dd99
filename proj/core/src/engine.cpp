#include "dhazard/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "dhazard/error.hpp"

namespace dhazard {

std::string_view to_string(SelectionRule rule) { return rule == SelectionRule::aic ? "aic" : "loglik"; }

SelectionRule parse_selection_rule(std::string_view text) {
  if (text == "aic") return SelectionRule::aic;
  if (text == "loglik") return SelectionRule::loglik;
  throw ConfigError("unknown selection rule '" + std::string(text) + "' (aic, loglik)");
}

void EngineConfig::validate(int max_time) const {
  if (boost_iterations < 0) throw ConfigError("boost_iterations must be >= 0");
  if (refit_iterations < 1) throw ConfigError("refit_iterations must be >= 1");
  if (!(step > 0.0 && step <= 1.0)) throw ConfigError("step must lie in (0, 1]");
  if (burn_in < 0 || burn_in >= refit_iterations) throw ConfigError("burn_in must lie in [0, refit_iterations)");
  if (batch_rows < static_cast<std::size_t>(std::max(max_time, 1))) {
    throw ConfigError("batch_rows must be at least the longest observed time (" + std::to_string(max_time) + ")");
  }
  if (tau.points < 1) throw ConfigError("tau.points must be >= 1");
  if (tau.passes < 1) throw ConfigError("tau.passes must be >= 1");
  if (!(tau.initial > 0.0)) throw ConfigError("tau.initial must be > 0");
  if (!(tau.log10_min <= tau.log10_max)) throw ConfigError("tau.log10_min must not exceed tau.log10_max");
  if (!(tau.half_width >= 0.0)) throw ConfigError("tau.half_width must be >= 0");
  if (stop_patience < 1) throw ConfigError("stop_patience must be >= 1");
}

std::vector<std::size_t> FitReport::selected() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    if (terms[j].selected) out.push_back(j);
  }
  return out;
}

Eigen::VectorXd stochastic_update(const Eigen::VectorXd& old_beta, const Eigen::VectorXd& batch_beta, double nu) {
  if (old_beta.size() != batch_beta.size()) throw DimensionError("stochastic_update: dimension mismatch");
  if (nu == 1.0) return batch_beta;
  return (1.0 - nu) * old_beta + nu * batch_beta;
}

std::vector<double> tau_grid(double center_log10, double half_width, const TauSearchConfig& grid) {
  std::vector<double> out;
  const double c = std::clamp(center_log10, grid.log10_min, grid.log10_max);
  if (grid.points == 1) return {c};
  for (int i = 0; i < grid.points; ++i) {
    const double v = c + half_width * (-1.0 + 2.0 * i / (grid.points - 1));
    out.push_back(std::clamp(v, grid.log10_min, grid.log10_max));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TauSearchResult tau_search(const std::vector<DesignBlock>& blocks, std::size_t j, const ModelState& state,
                           const NormalEquations& ne, const Frame& eval, const Eigen::VectorXd& eval_eta,
                           const TauSearchConfig& grid) {
  const DesignBlock& block = blocks.at(j);
  Eigen::VectorXd eta_minus = eval_eta;
  add_to_rows(block, term_values(block, state.beta[j], eval), eval, eta_minus, -1.0);

  auto score = [&](const Eigen::VectorXd& tau, TauSearchResult& out) {
    const Eigen::MatrixXd p = penalty_matrix(block, tau);
    const PenalizedSolution sol = solve_penalized(ne, p);
    Eigen::VectorXd eta = eta_minus;
    add_to_rows(block, term_values(block, sol.beta, eval), eval, eta);
    out.tau = tau;
    out.beta = sol.beta;
    out.ridge = sol.ridge;
    // Out-of-batch log-likelihood brought to full-data scale before adding 2 edf.
    out.score = aic(loglik(eval.y(), eta) / eval.share(), edf(ne, p));
  };

  TauSearchResult best;
  score(state.tau[j], best);
  if (!grid.enabled || !block.penalized()) return best;

  Eigen::VectorXd tau = state.tau[j];
  for (Eigen::Index c = 0; c < tau.size(); ++c) {
    double center = std::log10(std::max(tau(c), std::numeric_limits<double>::min()));
    double width = grid.half_width;
    for (int pass = 0; pass < grid.passes; ++pass) {
      bool have = false;
      TauSearchResult pass_best;
      for (double lg : tau_grid(center, width, grid)) {
        Eigen::VectorXd cand = tau;
        cand(c) = std::pow(10.0, lg);
        TauSearchResult r;
        score(cand, r);
        // Ascending grid with <= keeps the larger tau on ties.
        if (!have || r.score <= pass_best.score) {
          pass_best = r;
          have = true;
        }
      }
      best = pass_best;
      tau = best.tau;
      center = std::log10(tau(c));
      width *= 0.5;
    }
  }
  return best;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Frame draw_frame(const AugmentedDataset& data, std::size_t max_rows, std::uint64_t seed) {
  Rng rng(seed);
  return Frame(data, sample_batch(data, max_rows, rng));
}

bool is_active(const std::vector<bool>& active, std::size_t j) { return active.empty() || active[j]; }

}  // namespace

IterationRecord boosting_step(const std::vector<DesignBlock>& blocks, ModelState& state, const Frame& fit,
                              const Frame& eval, const EngineConfig& config, BoostingTally& tally,
                              const std::vector<bool>& active) {
  IterationRecord rec;
  rec.fit_rows = fit.rows();
  rec.eval_rows = eval.rows();
  if (tally.updates.size() != blocks.size()) {
    tally.updates.assign(blocks.size(), 0);
    tally.contribution.assign(blocks.size(), 0.0);
    tally.ridge.assign(blocks.size(), 0);
  }

  Eigen::VectorXd fit_eta = predictor(blocks, state, fit);
  Eigen::VectorXd eval_eta = predictor(blocks, state, eval);
  const WorkingQuantities wq = score_weights(fit.y(), fit_eta);
  const double eval_rows = static_cast<double>(eval.rows());
  const double base_ll = loglik(eval.y(), eval_eta);

  // Candidates only read the snapshot; the argmax keeps the lowest index on ties.
  double best_gain = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_beta;
  bool best_ridge = false;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (!is_active(active, j)) continue;
    const NormalEquations ne = accumulate(blocks[j], state.beta[j], fit, wq);
    const Eigen::MatrixXd penalty = penalty_matrix(blocks[j], state.tau[j]);
    const PenalizedSolution sol = solve_penalized(ne, penalty);
    if (sol.ridge) ++tally.ridge[j];
    Eigen::VectorXd cand = stochastic_update(state.beta[j], sol.beta, config.step);
    Eigen::VectorXd eta = eval_eta;
    add_to_rows(blocks[j], term_values(blocks[j], cand - state.beta[j], eval), eval, eta);
    double gain = loglik(eval.y(), eta) - base_ll;
    if (config.rule == SelectionRule::aic && tally.updates[j] == 0) gain -= edf(ne, penalty);
    gain /= eval_rows;
    if (gain > best_gain) {
      best_gain = gain;
      rec.best = static_cast<int>(j);
      best_beta = std::move(cand);
      best_ridge = sol.ridge;
    }
  }
  rec.improvement = rec.best >= 0 ? best_gain : 0.0;
  rec.oob_loglik = base_ll / eval_rows;

  if (rec.best < 0 || !(best_gain > 0.0)) return rec;

  const auto j = static_cast<std::size_t>(rec.best);
  const Eigen::VectorXd delta = best_beta - state.beta[j];
  add_to_rows(blocks[j], term_values(blocks[j], delta, fit), fit, fit_eta);
  add_to_rows(blocks[j], term_values(blocks[j], delta, eval), eval, eval_eta);
  state.beta[j] = best_beta;
  rec.winner = rec.best;
  rec.ridge = best_ridge;
  rec.oob_loglik = loglik(eval.y(), eval_eta) / eval_rows;
  ++tally.updates[j];
  tally.contribution[j] += best_gain;

  if (blocks[j].penalized() && config.tau.enabled) {
    const WorkingQuantities wq_new = score_weights(fit.y(), fit_eta);
    const NormalEquations ne = accumulate(blocks[j], state.beta[j], fit, wq_new);
    state.tau[j] = tau_search(blocks, j, state, ne, eval, eval_eta, config.tau).tau;
  }
  return rec;
}

IterationRecord boosting_iteration(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                   ModelState& state, const EngineConfig& config, int iteration,
                                   BoostingTally& tally, const std::vector<bool>& active) {
  if (data.num_individuals() < 2) throw ValidationError("boosting needs at least 2 individuals");
  const auto l = static_cast<std::uint64_t>(iteration);
  const std::uint64_t fit_seed = derive_seed(config.seed, static_cast<std::uint64_t>(SeedStream::boost_fit), l);
  const std::uint64_t eval_seed = derive_seed(config.seed, static_cast<std::uint64_t>(SeedStream::boost_eval), l);
  const Frame fit = draw_frame(data, config.batch_rows, fit_seed);
  const Frame eval = draw_frame(data, config.batch_rows, eval_seed);
  IterationRecord rec = boosting_step(blocks, state, fit, eval, config, tally, active);
  rec.iteration = iteration;
  rec.fit_seed = fit_seed;
  rec.eval_seed = eval_seed;
  return rec;
}

namespace {

FitReport empty_report(const std::vector<DesignBlock>& blocks, const ModelState& state, std::uint64_t seed) {
  FitReport report;
  report.seed = seed;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    TermSummary t;
    t.name = blocks[j].term.name;
    t.tau = state.tau[j];
    report.terms.push_back(std::move(t));
  }
  return report;
}

}  // namespace

std::pair<ModelState, FitReport> run_boosting(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                              const EngineConfig& config) {
  config.validate(data.max_time());
  const auto start = std::chrono::steady_clock::now();
  ModelState state = initial_state(blocks, config.tau.initial);
  FitReport report = empty_report(blocks, state, config.seed);
  BoostingTally tally;
  tally.updates.assign(blocks.size(), 0);
  tally.contribution.assign(blocks.size(), 0.0);
  tally.ridge.assign(blocks.size(), 0);

  int stalled = 0;
  for (int l = 0; l < config.boost_iterations; ++l) {
    report.boosting.push_back(boosting_iteration(blocks, data, state, config, l, tally));
    const auto& rec = report.boosting.back();
    stalled = rec.improvement < config.stop_tolerance ? stalled + 1 : 0;
    if (stalled >= config.stop_patience) {
      report.early_stopped = true;
      break;
    }
  }

  const double run = static_cast<double>(report.boosting.size());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    auto& t = report.terms[j];
    t.updates = tally.updates[j];
    t.frequency = run > 0 ? tally.updates[j] / run : 0.0;
    t.contribution = tally.contribution[j];
    t.selected = tally.updates[j] > 0;
    t.tau = state.tau[j];
    t.ridge_fallbacks = tally.ridge[j];
  }
  report.boosting_seconds = seconds_since(start);
  return {std::move(state), std::move(report)};
}

bool batch_sweep(const std::vector<DesignBlock>& blocks, const std::vector<std::size_t>& terms, ModelState& state,
                 const Frame& fit, Eigen::VectorXd& fit_eta, const Frame* eval, Eigen::VectorXd* eval_eta,
                 double nu, const TauSearchConfig& grid) {
  bool ridge = false;
  for (std::size_t j : terms) {
    const DesignBlock& block = blocks.at(j);
    const WorkingQuantities wq = score_weights(fit.y(), fit_eta);
    const NormalEquations ne = accumulate(block, state.beta[j], fit, wq);
    Eigen::VectorXd batch_beta;
    if (eval != nullptr && grid.enabled && block.penalized()) {
      TauSearchResult r = tau_search(blocks, j, state, ne, *eval, *eval_eta, grid);
      state.tau[j] = r.tau;
      batch_beta = std::move(r.beta);
      ridge = ridge || r.ridge;
    } else {
      PenalizedSolution sol = solve_penalized(ne, penalty_matrix(block, state.tau[j]));
      batch_beta = std::move(sol.beta);
      ridge = ridge || sol.ridge;
    }
    const Eigen::VectorXd next = stochastic_update(state.beta[j], batch_beta, nu);
    const Eigen::VectorXd delta = next - state.beta[j];
    add_to_rows(block, term_values(block, delta, fit), fit, fit_eta);
    if (eval != nullptr) add_to_rows(block, term_values(block, delta, *eval), *eval, *eval_eta);
    state.beta[j] = next;
  }
  return ridge;
}

std::pair<ModelState, FitReport> run_refit(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                           const std::vector<std::size_t>& selected, const EngineConfig& config,
                                           const std::optional<ModelState>& start) {
  config.validate(data.max_time());
  if (selected.empty()) throw FitError("refit needs at least one selected term");
  const auto t0 = std::chrono::steady_clock::now();

  ModelState state = start ? *start : initial_state(blocks, config.tau.initial);
  std::vector<bool> keep(blocks.size(), false);
  for (std::size_t j : selected) keep.at(j) = true;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (!keep[j]) state.beta[j].setZero();
  }

  FitReport report = empty_report(blocks, state, config.seed);
  std::vector<Eigen::VectorXd> sum;
  for (const auto& b : state.beta) sum.push_back(Eigen::VectorXd::Zero(b.size()));
  std::vector<int> ridge(blocks.size(), 0);

  for (int l = 0; l < config.refit_iterations; ++l) {
    const auto li = static_cast<std::uint64_t>(l);
    IterationRecord rec;
    rec.iteration = l;
    rec.fit_seed = derive_seed(config.seed, static_cast<std::uint64_t>(SeedStream::refit_fit), li);
    rec.eval_seed = derive_seed(config.seed, static_cast<std::uint64_t>(SeedStream::refit_eval), li);
    const Frame fit = draw_frame(data, config.batch_rows, rec.fit_seed);
    const Frame eval = draw_frame(data, config.batch_rows, rec.eval_seed);
    rec.fit_rows = fit.rows();
    rec.eval_rows = eval.rows();
    Eigen::VectorXd fit_eta = predictor(blocks, state, fit);
    Eigen::VectorXd eval_eta = predictor(blocks, state, eval);
    const double before = loglik(eval.y(), eval_eta);
    rec.ridge = batch_sweep(blocks, selected, state, fit, fit_eta, &eval, &eval_eta, 1.0, config.tau);
    const double after = loglik(eval.y(), eval_eta);
    rec.improvement = (after - before) / static_cast<double>(eval.rows());
    rec.oob_loglik = after / static_cast<double>(eval.rows());
    if (rec.ridge) {
      for (std::size_t j : selected) ++ridge[j];
    }
    report.refit.push_back(rec);
    report.trajectories.push_back(state.beta);
    if (l >= config.burn_in) {
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += state.beta[j];
    }
  }

  const double kept = static_cast<double>(config.refit_iterations - config.burn_in);
  ModelState out = state;
  for (std::size_t j = 0; j < sum.size(); ++j) out.beta[j] = sum[j] / kept;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    report.terms[j].selected = keep[j];
    report.terms[j].tau = out.tau[j];
    report.terms[j].ridge_fallbacks = ridge[j];
  }
  report.refit_seconds = seconds_since(t0);
  return {std::move(out), std::move(report)};
}

std::pair<ModelState, FitReport> fit(const std::vector<DesignBlock>& blocks, const AugmentedDataset& data,
                                     const EngineConfig& config) {
  config.validate(data.max_time());
  if (!config.select) {
    std::vector<std::size_t> all(blocks.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    return run_refit(blocks, data, all, config);
  }

  auto [boost_state, boost_report] = run_boosting(blocks, data, config);
  const std::vector<std::size_t> selected = boost_report.selected();
  if (selected.empty()) {
    throw FitError("boosting selected no terms; increase boost_iterations or lower the tau search bounds");
  }
  auto [state, refit_report] = run_refit(blocks, data, selected, config, boost_state);

  FitReport merged = std::move(boost_report);
  merged.refit = std::move(refit_report.refit);
  merged.trajectories = std::move(refit_report.trajectories);
  merged.refit_seconds = refit_report.refit_seconds;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    merged.terms[j].tau = state.tau[j];
    merged.terms[j].ridge_fallbacks += refit_report.terms[j].ridge_fallbacks;
  }
  return {std::move(state), std::move(merged)};
}

}  // namespace dhazard
