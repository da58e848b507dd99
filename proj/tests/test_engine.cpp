#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dhazard/engine.hpp"
#include "dhazard/error.hpp"
#include "dhazard/simulation.hpp"
#include "helpers.hpp"

using namespace dhazard;

namespace {

DesignBlock intercept_block() {
  DesignBlock b;
  b.term = {"icpt", TermKind::linear, {}, 1, 0, 1};
  b.key = KeyKind::time;
  b.basis = Eigen::MatrixXd::Ones(1, 1);
  b.key_weights = Eigen::VectorXd::Ones(1);
  return b;
}

// `copies` individuals with y = 1, 1, 1, 0 followed by `copies` with 0, 0, 0, 1.
AugmentedDataset opposing_halves(int copies) {
  PersonData d;
  const int first[4] = {1, 1, 1, 0};
  const int second[4] = {0, 0, 0, 1};
  int id = 0;
  for (const int* pattern : {first, second}) {
    for (int c = 0; c < copies; ++c) {
      for (int k = 0; k < 4; ++k) d.records.push_back(testing::record(std::to_string(id++), 1, pattern[k]));
    }
  }
  return augment(d, 1);
}

Batch range_batch(const AugmentedDataset& data, std::uint32_t begin, std::uint32_t end) {
  Batch b;
  for (std::uint32_t i = begin; i < end; ++i) {
    b.individuals.push_back(i);
    b.row_count += static_cast<std::size_t>(data.observed_time(i));
  }
  return b;
}

std::vector<TermSpec> small_terms(int p) {
  std::vector<TermSpec> t{{"f0", TermKind::baseline_smooth, {}, 6, 3, 2}};
  for (int c = 1; c <= p; ++c) {
    t.push_back({"s" + std::to_string(c), TermKind::univariate_smooth, {"x" + std::to_string(c)}, 8, 3, 2});
  }
  return t;
}

EngineConfig small_config() {
  EngineConfig c;
  c.boost_iterations = 60;
  c.refit_iterations = 30;
  c.burn_in = 15;
  c.batch_rows = 3000;
  c.seed = 99;
  return c;
}

void check_same_report(const FitReport& a, const FitReport& b) {
  REQUIRE(a.terms.size() == b.terms.size());
  for (std::size_t j = 0; j < a.terms.size(); ++j) {
    CHECK(a.terms[j].selected == b.terms[j].selected);
    CHECK(a.terms[j].updates == b.terms[j].updates);
    CHECK(a.terms[j].contribution == b.terms[j].contribution);
    CHECK(a.terms[j].tau == b.terms[j].tau);
  }
  REQUIRE(a.boosting.size() == b.boosting.size());
  for (std::size_t l = 0; l < a.boosting.size(); ++l) {
    CHECK(a.boosting[l].winner == b.boosting[l].winner);
    CHECK(a.boosting[l].improvement == b.boosting[l].improvement);
    CHECK(a.boosting[l].fit_seed == b.boosting[l].fit_seed);
  }
  CHECK(a.early_stopped == b.early_stopped);
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("stochastic update") {
    Eigen::VectorXd old(2), batch(2);
    old << 0.0, 2.0;
    batch << 1.0, 4.0;
    CHECK(stochastic_update(old, batch, 1.0) == batch);
    CHECK(stochastic_update(old, batch, 0.0) == old);
    CHECK(stochastic_update(old, batch, 0.1)(0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(stochastic_update(old, batch, 0.1)(1) == doctest::Approx(2.2).epsilon(1e-15));
    CHECK_THROWS_AS(stochastic_update(old, Eigen::VectorXd::Zero(3), 0.5), DimensionError);
  }

  TEST_CASE("config validation") {
    EngineConfig c;
    CHECK_NOTHROW(c.validate(20));
    c.step = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = EngineConfig{};
    c.burn_in = c.refit_iterations;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = EngineConfig{};
    c.batch_rows = 5;
    CHECK_THROWS_AS(c.validate(6), ConfigError);
    CHECK(parse_selection_rule("loglik") == SelectionRule::loglik);
    CHECK_THROWS_AS(parse_selection_rule("bic"), ConfigError);
  }

  TEST_CASE("an improving single candidate is accepted") {
    const AugmentedDataset data = opposing_halves(100);
    const std::vector<DesignBlock> blocks{intercept_block()};
    const Frame fit(data, range_batch(data, 0, 400));
    for (SelectionRule rule : {SelectionRule::aic, SelectionRule::loglik}) {
      EngineConfig config;
      config.rule = rule;
      ModelState state = initial_state(blocks, 0.0);
      BoostingTally tally;
      const IterationRecord rec = boosting_step(blocks, state, fit, fit, config, tally);
      CHECK(rec.winner == 0);
      CHECK(rec.improvement > 0.0);
      CHECK(tally.updates[0] == 1);
      // One Newton step from 0 lands on 1 (X'WX = X'Wz = 100), scaled by nu = 0.1.
      CHECK(state.beta[0](0) == doctest::Approx(0.1).epsilon(1e-12));
    }
  }

  TEST_CASE("worsening candidates leave the state unchanged") {
    const AugmentedDataset data = opposing_halves(100);
    const std::vector<DesignBlock> blocks{intercept_block()};
    const Frame fit(data, range_batch(data, 0, 400));
    const Frame eval(data, range_batch(data, 400, 800));
    for (SelectionRule rule : {SelectionRule::aic, SelectionRule::loglik}) {
      EngineConfig config;
      config.rule = rule;
      ModelState state = initial_state(blocks, 0.0);
      const ModelState before = state;
      BoostingTally tally;
      const IterationRecord rec = boosting_step(blocks, state, fit, eval, config, tally);
      CHECK(rec.winner == -1);
      CHECK(rec.best == 0);
      CHECK(rec.improvement < 0.0);
      CHECK(state == before);
      CHECK(tally.updates[0] == 0);
    }
  }

  TEST_CASE("tau grid") {
    TauSearchConfig g;
    const auto grid = tau_grid(2.0, 2.0, g);
    REQUIRE(grid.size() == 7);
    CHECK(grid.front() == doctest::Approx(0.0));
    CHECK(grid.back() == doctest::Approx(4.0));
    const auto clamped = tau_grid(7.5, 2.0, g);
    CHECK(clamped.back() == g.log10_max);
    CHECK(std::is_sorted(clamped.begin(), clamped.end()));
    g.points = 1;
    CHECK(tau_grid(1.5, 2.0, g) == std::vector<double>{1.5});
  }

  TEST_CASE("tau search on a one-point grid returns that point") {
    const AugmentedDataset data = augment(testing::random_person(300, 1, 5, 3), 5);
    const auto blocks = build_design(small_terms(1), data);
    ModelState state = initial_state(blocks, 100.0);
    const Frame frame(data, full_batch(data));
    const Eigen::VectorXd eta = predictor(blocks, state, frame);
    const NormalEquations ne = accumulate(blocks[1], state.beta[1], frame, score_weights(frame.y(), eta));
    TauSearchConfig g;
    g.points = 1;
    const TauSearchResult r = tau_search(blocks, 1, state, ne, frame, eta, g);
    CHECK(r.tau(0) == doctest::Approx(100.0).epsilon(1e-12));
  }

  TEST_CASE("tau search drifts to maximal smoothing for a pure-noise term") {
    // x1 carries no effect.
    const AugmentedDataset data = augment(testing::random_person(3000, 1, 8, 41, 0.0), 8);
    const auto blocks = build_design(small_terms(1), data);
    ModelState state = initial_state(blocks, 100.0);
    state.beta[1].setZero();
    std::vector<DesignBlock> baseline_only{blocks[0]};
    ModelState base = initial_state(baseline_only, 100.0);
    REQUIRE(testing::backfit_to_convergence(baseline_only, data, base) > 0);
    state.beta[0] = base.beta[0];

    const Frame frame(data, full_batch(data));
    const Eigen::VectorXd eta = predictor(blocks, state, frame);
    const NormalEquations ne = accumulate(blocks[1], state.beta[1], frame, score_weights(frame.y(), eta));
    TauSearchConfig g;
    double previous = state.tau[1](0);
    for (int call = 0; call < 4; ++call) {
      state.tau[1] = tau_search(blocks, 1, state, ne, frame, eta, g).tau;
      CHECK(state.tau[1](0) >= previous);
      previous = state.tau[1](0);
    }
    CHECK(std::log10(state.tau[1](0)) == doctest::Approx(g.log10_max));
  }

  TEST_CASE("tau search picks light smoothing for the wiggly effect") {
    sim::SimConfig sc;
    sc.n = 5000;
    sim::TrueModel model;
    const PersonData person = sim::simulate_dataset(sc, 5, &model);
    const AugmentedDataset data = augment(person, sc.horizon);
    const std::vector<TermSpec> terms{{"f0", TermKind::baseline_smooth, {}, 10, 3, 2},
                                      {"f4", TermKind::univariate_smooth, {"x4"}, 20, 3, 2}};
    const auto blocks = build_design(terms, data);
    ModelState state = initial_state(blocks, 100.0);
    REQUIRE(testing::backfit_to_convergence(blocks, data, state, 1e-8) > 0);
    Rng r1(1), r2(2);
    const Frame fit(data, sample_batch(data, 20000, r1));
    const Frame eval(data, sample_batch(data, 20000, r2));
    const Eigen::VectorXd fit_eta = predictor(blocks, state, fit);
    const Eigen::VectorXd eval_eta = predictor(blocks, state, eval);
    const NormalEquations ne = accumulate(blocks[1], state.beta[1], fit, score_weights(fit.y(), fit_eta));
    TauSearchConfig g;
    const TauSearchResult best = tau_search(blocks, 1, state, ne, eval, eval_eta, g);
    g.points = 1;
    const TauSearchResult center = tau_search(blocks, 1, state, ne, eval, eval_eta, g);
    CHECK(best.tau(0) < 100.0);
    CHECK(best.score < center.score);
  }

  TEST_CASE("a nu = 1 sweep on the full data equals backfitting") {
    const AugmentedDataset data = augment(testing::random_person(400, 2, 6, 8), 6);
    const auto blocks = build_design(small_terms(2), data);
    ModelState a = initial_state(blocks, 10.0);
    a.beta[0].setConstant(-1.0);
    ModelState b = a;
    const Frame frame(data, full_batch(data));
    Eigen::VectorXd eta_a = predictor(blocks, a, frame);
    Eigen::VectorXd eta_b = eta_a;
    const std::vector<std::size_t> all{0, 1, 2};
    TauSearchConfig g;
    g.enabled = false;
    for (int sweep = 0; sweep < 3; ++sweep) {
      batch_sweep(blocks, all, a, frame, eta_a, nullptr, nullptr, 1.0, g);
      for (std::size_t j : all) backfit_update(blocks, j, b, frame, eta_b);
    }
    for (std::size_t j : all) CHECK((a.beta[j] - b.beta[j]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((eta_a - eta_b).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("boosting with zero iterations") {
    const AugmentedDataset data = augment(testing::random_person(200, 1, 5, 2), 5);
    const auto blocks = build_design(small_terms(1), data);
    EngineConfig c = small_config();
    c.boost_iterations = 0;
    const auto [state, report] = run_boosting(blocks, data, c);
    CHECK(report.selected().empty());
    for (const auto& b : state.beta) CHECK(b.isZero());
    CHECK_THROWS_AS(fit(blocks, data, c), FitError);
  }

  TEST_CASE("boosting selects the informative term and is deterministic") {
    const AugmentedDataset data = augment(testing::random_person(1500, 3, 8, 13, 1.0), 8);
    const auto blocks = build_design(small_terms(3), data);
    const EngineConfig c = small_config();
    const auto [s1, r1] = run_boosting(blocks, data, c);
    const auto [s2, r2] = run_boosting(blocks, data, c);
    CHECK(s1 == s2);
    check_same_report(r1, r2);
    CHECK(r1.terms[0].selected);
    CHECK(r1.terms[1].selected);

    double total = 0.0;
    int negative = 0;
    for (const auto& t : r1.terms) total += t.frequency;
    for (const auto& rec : r1.boosting) {
      if (rec.winner >= 0 && rec.improvement < 0.0) ++negative;
      CHECK(rec.fit_seed != rec.eval_seed);
    }
    CHECK(total <= 1.0 + 1e-12);
    CHECK(negative == 0);
  }

  TEST_CASE("selected set grows with the iteration count") {
    const AugmentedDataset data = augment(testing::random_person(1500, 3, 8, 19, 1.0), 8);
    const auto blocks = build_design(small_terms(3), data);
    EngineConfig c = small_config();
    c.boost_iterations = 30;
    const auto shorter = run_boosting(blocks, data, c).second.selected();
    c.boost_iterations = 60;
    const auto longer = run_boosting(blocks, data, c).second.selected();
    CHECK(std::includes(longer.begin(), longer.end(), shorter.begin(), shorter.end()));
  }

  TEST_CASE("boosting stops early once nothing improves") {
    const AugmentedDataset data = augment(testing::random_person(300, 1, 5, 6, 0.0), 5);
    const std::vector<TermSpec> terms{{"f0", TermKind::baseline_smooth, {}, 5, 3, 2}};
    const auto blocks = build_design(terms, data);
    EngineConfig c = small_config();
    c.boost_iterations = 200;
    c.step = 1.0;
    c.tau.enabled = false;
    const auto [state, report] = run_boosting(blocks, data, c);
    CHECK(report.early_stopped);
    CHECK(report.boosting.size() < 200);
  }

  TEST_CASE("refit with burn-in L - 1 returns the last iterate") {
    const AugmentedDataset data = augment(testing::random_person(800, 2, 6, 23), 6);
    const auto blocks = build_design(small_terms(2), data);
    EngineConfig c = small_config();
    c.batch_rows = 1500;
    c.refit_iterations = 12;
    c.burn_in = 11;
    const std::vector<std::size_t> sel{0, 1};
    const auto [state, report] = run_refit(blocks, data, sel, c);
    REQUIRE(report.trajectories.size() == 12);
    for (std::size_t j = 0; j < blocks.size(); ++j) CHECK(state.beta[j] == report.trajectories.back()[j]);
    CHECK(state.beta[2].isZero());
    CHECK(!report.terms[2].selected);

    const auto again = run_refit(blocks, data, sel, c);
    CHECK(again.first == state);
    CHECK_THROWS_AS(run_refit(blocks, data, {}, c), FitError);
  }

  TEST_CASE("refit on data smaller than a batch reaches the joint solution") {
    const AugmentedDataset data = augment(testing::random_person(250, 2, 6, 29), 6);
    const auto blocks = build_design(small_terms(2), data);
    EngineConfig c = small_config();
    c.batch_rows = 20000;
    c.refit_iterations = 120;
    c.burn_in = 80;
    c.tau.enabled = false;
    c.tau.initial = 5.0;
    const std::vector<std::size_t> all{0, 1, 2};
    const auto [state, report] = run_refit(blocks, data, all, c);
    const auto oracle = testing::joint_irls(blocks, data, state.tau);
    for (std::size_t j = 0; j < all.size(); ++j) CHECK((state.beta[j] - oracle[j]).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("fit without selection refits every term") {
    const AugmentedDataset data = augment(testing::random_person(400, 2, 6, 31), 6);
    const auto blocks = build_design(small_terms(2), data);
    EngineConfig c = small_config();
    c.select = false;
    const auto [state, report] = fit(blocks, data, c);
    CHECK(report.selected().size() == 3);
    CHECK(report.boosting.empty());
    CHECK(report.refit.size() == static_cast<std::size_t>(c.refit_iterations));
  }

  TEST_CASE("pure-intercept truth selects only the baseline") {
    sim::SimConfig sc;
    sc.n = 1000;
    sc.basis_dim = 10;
    int only_baseline = 0;
    const int reps = 25;
    for (int r = 0; r < reps; ++r) {
      Rng rng(derive_seed(2024, 0, static_cast<std::uint64_t>(r)));
      sim::TrueModel model = sim::true_effects(sc);
      for (double& s : model.scale) s = 0.0;
      const sim::CovariateTable cov = sim::gen_covariates(sc.n, false, rng);
      const AugmentedDataset data = augment(sim::gen_events(cov, model, sc.horizon, rng), sc.horizon);
      const auto blocks = build_design(sim::simulation_terms(sc), data);
      EngineConfig c;
      c.boost_iterations = 100;
      c.batch_rows = 5000;
      c.seed = derive_seed(2024, 1, static_cast<std::uint64_t>(r));
      const auto selected = run_boosting(blocks, data, c).second.selected();
      only_baseline += selected == std::vector<std::size_t>{0};
    }
    MESSAGE("baseline-only selections: " << only_baseline << " / " << reps);
    CHECK(only_baseline >= 23);
  }
}
