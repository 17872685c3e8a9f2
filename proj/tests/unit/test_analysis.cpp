#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "percreach/analysis.hpp"
#include "percreach/errors.hpp"
#include "percreach/presets.hpp"
#include "support.hpp"

using namespace percreach;

namespace {

ValueField oracle_field(double horizon, std::size_t n = 201) {
  const Grid g = testing::line_grid(n);
  SolveConfig cfg;
  cfg.T = horizon;
  return solve(testing::drift_by_error(1.0), testing::identity_failure(g), g, cfg);
}

ValueField constant_field(double value) {
  const Grid g({0.0, 0.0}, {2.0, 3.0}, {5, 7}, {false, false});
  const ScalarField f(g, std::vector<double>(g.size(), value));
  return ValueField(f, {1.0, 0.0}, {f, f});
}

// x' = e with |e| <= rate * dark.
ClosedLoopModel growing_line(double rate) {
  auto m = testing::drift_by_error(0.0);
  m.error = ErrorBound::linear_growth({rate});
  return m;
}

Grid small_taxi_grid() {
  return Grid({-11.0, 100.0, -0.49}, {11.0, 250.0, 0.49}, {23, 7, 13}, {false, false, false});
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("membership examples") {
    const auto vf = oracle_field(1.0);
    CHECK(brt_membership(vf, {0.5}, 0.0));
    CHECK_FALSE(brt_membership(vf, {1.5}, 0.0));
    for (double t : {0.0, 0.3, 1.0}) CHECK(brt_membership(vf, {-0.2}, t));

    const auto zero = oracle_field(0.0);
    for (double x : {-1.0, -0.01, 0.0, 0.01, 1.0}) CHECK(brt_membership(zero, {x}, 0.0) == (x <= 0.0));
  }

  TEST_CASE("property: membership grows with the horizon") {
    testing::Gen gen(81);
    const auto vf = oracle_field(1.0);
    for (int i = 0; i < 500; ++i) {
      const double x = gen.uniform(-2, 2), t1 = gen.uniform(0, 1), t2 = gen.uniform(0, t1);
      if (brt_membership(vf, {x}, t1)) CHECK(brt_membership(vf, {x}, t2));
    }
  }

  TEST_CASE("safe volume examples") {
    CHECK(safe_volume(constant_field(1.0), 0.0) == doctest::Approx(6.0));
    CHECK(safe_volume(constant_field(-1.0), 0.0) == 0.0);
    const auto vf = oracle_field(1.0);
    CHECK(std::abs(safe_volume(vf, 0.0) - 1.0) <= 0.02 + 1e-12);
    CHECK(safe_volume(vf, 1.0) == doctest::Approx(2.0).epsilon(0.011));
  }

  TEST_CASE("safe volume shrinks with the horizon and the error box") {
    const Grid g = small_taxi_grid();
    Scenario a = taxiing_with_error(0.5, 0.02), b = taxiing_with_error(2.0, 0.1);
    a.solve.save_stride = 10;
    const auto va = solve(a.model, a.failure, g, a.solve);
    const auto vb = solve(b.model, b.failure, g, a.solve);
    double prev = safe_volume(va, va.T());
    for (double t = va.T(); t >= 0.0; t -= 2.0) {
      const double v = safe_volume(va, t);
      CHECK(v <= prev);
      prev = v;
    }
    CHECK(safe_volume(vb, 0.0) <= safe_volume(va, 0.0));
  }

  TEST_CASE("a single-cell sweep equals a direct solve") {
    Scenario s = taxiing_with_error(1.0, 0.05);
    const Grid g = small_taxi_grid();
    const auto r = sweep_hyperparameters(s.model, {-0.013}, {-0.44}, s.failure, g, s.solve, s.x0);
    REQUIRE(r.has_best);
    const auto vf = solve(s.model, s.failure, g, s.solve);
    CHECK(r.at(0, 0) == query_value(vf, s.x0, 0.0));
  }

  TEST_CASE("sweep records failed cells and keeps going") {
    Scenario s = taxiing_with_error(1.0, 0.05);
    const Grid g = small_taxi_grid();
    s.solve.T = 2.0;
    const auto r = sweep_hyperparameters(s.model, {0.01, -0.013}, {-0.44}, s.failure, g, s.solve, s.x0);
    REQUIRE(r.failures.size() == 1);
    CHECK(r.failures[0].a_index == 0);
    CHECK(std::isnan(r.at(0, 0)));
    CHECK(std::isfinite(r.at(1, 0)));
    CHECK(r.best_a == 1);
    std::ostringstream os;
    write_sweep_csv(os, r);
    CHECK(os.str().find("0.01,-0.44,nan\n") != std::string::npos);
    CHECK(os.str().rfind("a,b,value\n", 0) == 0);
  }

  TEST_CASE("sweep argmax is invariant to rescaling l") {
    Scenario s = taxiing_with_error(2.0, 0.1);
    const Grid g = small_taxi_grid();
    s.solve.T = 8.0;
    const std::vector<double> as{-0.03, -0.013, 0.0}, bs{-0.9, -0.44, -0.1};
    const ScalarField l = s.failure.sample(g);
    std::vector<double> scaled(l.values().begin(), l.values().end());
    for (auto& v : scaled) v *= 3.0;
    const FailureSpec big(ImportedField{ScalarField(g, scaled)});
    const auto r1 = sweep_hyperparameters(s.model, as, bs, FailureSpec(ImportedField{l}), g, s.solve, s.x0);
    const auto r2 = sweep_hyperparameters(s.model, as, bs, big, g, s.solve, s.x0);
    CHECK(r1.best_a == r2.best_a);
    CHECK(r1.best_b == r2.best_b);
    CHECK(r2.at(r2.best_a, r2.best_b) == doctest::Approx(3.0 * r1.at(r1.best_a, r1.best_b)).epsilon(1e-9));
  }

  TEST_CASE("dark budget matches the analytic square-root law") {
    // l' = x and the error grows at 1/s, so V(x, T - tau) = x - tau^2 / 2 and
    // tau* = sqrt(2x) capped at the horizon.
    const Grid g = testing::line_grid(201);
    auto zero_model = growing_line(0.0);
    SolveConfig cfg;
    cfg.T = 2.0;
    cfg.save_stride = 1;
    const auto zero = solve(zero_model, testing::identity_failure(g), g, cfg);
    const auto res = synthesize_dark_budget(growing_line(1.0), zero, 2.0, cfg);
    const auto& budget = res.budget;
    CHECK(budget.horizon() == 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = g.point(i)[0];
      const double want = x <= 0.0 ? 0.0 : std::min(std::sqrt(2.0 * x), 2.0);
      CAPTURE(x);
      CHECK(std::abs(budget.tau_star()[i] - want) <= 0.05);
    }
    // tau* > 0 only where the surrogate is positive.
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (budget.tau_star()[i] > 0.0) CHECK(zero.initial()[i] > 0.0);
    }

    const auto still = synthesize_dark_budget(growing_line(0.0), zero, 2.0, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(still.budget.tau_star()[i] == (zero.initial()[i] > 0.0 ? 2.0 : 0.0));
    }
  }

  TEST_CASE("dark budget reads the sign change between slices") {
    const Grid g({0.0}, {2.0}, {3}, {false});
    const ScalarField lp(g, {-1.0, 1.0, 2.0});
    const ValueField vf(lp, {4.0, 3.0, 2.0}, {lp, ScalarField(g, {-1.0, 0.5, 1.0}), ScalarField(g, {-2.0, -0.5, 0.25})});
    const auto b = dark_budget_from(vf);
    CHECK(b.tau_star()[0] == 0.0);
    CHECK(b.tau_star()[1] == doctest::Approx(1.5));
    CHECK(b.tau_star()[2] == 2.0);
    CHECK(b.horizon() == 2.0);
  }

  TEST_CASE("light policy examples") {
    const Grid g({0.0}, {2.0}, {3}, {false});
    const DarkBudgetField b(g, {0.0, 1.0, 3.0}, 3.0);
    CHECK(light_policy_step(b, {2.0}, 0.0, 0.1) == LightAction::kKeepOff);
    CHECK(light_policy_step(b, {0.0}, 0.0, 0.1) == LightAction::kLightsOn);
    CHECK(light_policy_step(b, {1.0}, 0.85, 0.1) == LightAction::kKeepOff);
    CHECK(light_policy_step(b, {1.0}, 0.9, 0.1) == LightAction::kLightsOn);
    CHECK(b.at({1.5}) == doctest::Approx(2.0));
  }

  TEST_CASE("policy rollout keeps the line system safe with periodic resets") {
    const Grid g = testing::line_grid(201);
    SolveConfig cfg;
    cfg.T = 2.0;
    cfg.save_stride = 1;
    const auto zero = solve(growing_line(0.0), testing::identity_failure(g), g, cfg);
    const auto res = synthesize_dark_budget(growing_line(1.0), zero, 2.0, cfg);
    PolicyRolloutOptions opts;
    opts.horizon = 6.0;
    opts.dt = 0.01;
    const auto tr =
        policy_rollout(res.budget, zero, growing_line(1.0), testing::identity_failure(g), {1.0}, opts);
    CHECK_FALSE(tr.exited_grid);
    CHECK(tr.min_l > 0.0);
    CHECK(tr.light_activations() >= 2);
    REQUIRE(tr.lights.size() == tr.dark.size());
    for (std::size_t k = 0; k < tr.lights.size(); ++k) {
      if (tr.lights[k]) CHECK(tr.dark[k] == 0.0);
      if (k > 0 && !tr.lights[k]) CHECK(tr.dark[k] == doctest::Approx(tr.dark[k - 1] + opts.dt));
    }

    // Without resets the same adversary drives the state into failure.
    const DarkBudgetField never(g, std::vector<double>(g.size(), 0.0), 2.0);
    const DarkBudgetField always_dark(g, std::vector<double>(g.size(), 100.0), 2.0);
    const auto dark = policy_rollout(always_dark, zero, growing_line(1.0), testing::identity_failure(g), {1.0}, opts);
    CHECK(dark.min_l <= 0.0);
    CHECK(dark.light_activations() == 0);
    const auto lit = policy_rollout(never, zero, growing_line(1.0), testing::identity_failure(g), {1.0}, opts);
    CHECK(lit.light_activations() == lit.lights.size());
    CHECK(lit.min_l == doctest::Approx(1.0));
  }
}
