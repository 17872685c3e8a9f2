#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "percreach/parallel.hpp"
#include "percreach/presets.hpp"
#include "percreach/rollout.hpp"
#include "support.hpp"

using namespace percreach;

namespace {

ValueField line_field(double ebar, double horizon) {
  const Grid g = testing::line_grid(201);
  SolveConfig cfg;
  cfg.T = horizon;
  return solve(testing::drift_by_error(ebar), testing::identity_failure(g), g, cfg);
}

Scenario small_taxi(double ep, double eth) {
  Scenario s = taxiing_with_error(ep, eth);
  s.grid = Grid({-11.0, 100.0, -0.49}, {11.0, 250.0, 0.49}, {23, 9, 15}, {false, false, false});
  s.solve.T = 5.0;
  return s;
}

void check_euler(const ClosedLoopModel& m, const Trajectory& tr) {
  REQUIRE(tr.states.size() == tr.errors.size() + 1);
  for (std::size_t k = 0; k + 1 < tr.states.size(); ++k) {
    const double dt = tr.times[k + 1] - tr.times[k];
    const SmallVec f = eval_closed_loop(m, tr.states[k], tr.disturbances[k], tr.errors[k], tr.dark[k]);
    const SmallVec want = tr.states[k] + dt * f;
    for (std::size_t d = 0; d < want.size(); ++d) {
      CHECK(std::abs(tr.states[k + 1][d] - want[d]) <= 1e-12 * std::max(1.0, std::abs(want[d])));
    }
  }
}

}  // namespace

TEST_SUITE("rollout") {
  TEST_CASE("worst case on the line follows the analytic adversary") {
    const auto vf = line_field(1.0, 1.0);
    const auto m = testing::drift_by_error(1.0);
    const FailureSpec l = testing::identity_failure(vf.grid());
    const auto safe = worst_case_rollout(vf, m, l, {1.5}, 0.0);
    CHECK(safe.min_l == doctest::Approx(0.5).epsilon(1e-9));
    CHECK_FALSE(safe.violated());
    const auto unsafe = worst_case_rollout(vf, m, l, {0.5}, 0.0);
    CHECK(unsafe.violated());
    for (const auto& e : unsafe.errors) CHECK(e[0] == -1.0);
    check_euler(m, unsafe);
  }

  TEST_CASE("zero error and no disturbance reproduce the nominal rollout") {
    Scenario s = small_taxi(0.0, 0.0);
    const auto vf = solve(s.model, s.failure, s.grid, s.solve);
    for (const SmallVec& x0 : {SmallVec{0.0, 100.0, 0.0}, SmallVec{3.0, 120.0, 0.3}, SmallVec{-8.0, 150.0, -0.2}}) {
      const auto w = worst_case_rollout(vf, s.model, s.failure, x0, 0.0);
      const auto n = nominal_rollout(s.model, s.failure, x0, 0.0, vf.T(), vf.dt());
      REQUIRE(w.states.size() == n.states.size());
      for (std::size_t k = 0; k < w.states.size(); ++k) CHECK(w.states[k] == n.states[k]);
      CHECK(w.min_l == n.min_l);
    }
  }

  TEST_CASE("rollouts respect the error box and the Euler recursion") {
    Scenario s = small_taxi(1.0, 0.05);
    const auto vf = solve(s.model, s.failure, s.grid, s.solve);
    testing::Gen gen(91);
    for (int trial = 0; trial < 10; ++trial) {
      const SmallVec x0{gen.uniform(-8, 8), gen.uniform(100, 150), gen.uniform(-0.4, 0.4)};
      const auto tr = worst_case_rollout(vf, s.model, s.failure, x0, 0.0);
      check_euler(s.model, tr);
      for (const auto& e : tr.errors) {
        CHECK(std::abs(e[0]) <= 1.0);
        CHECK(e[1] == 0.0);
        CHECK(std::abs(e[2]) <= 0.05);
      }
      MonteCarloOptions mo;
      mo.samples = 5;
      mo.seed = 3;
      mo.dt = vf.dt();
      check_euler(s.model, monte_carlo_sample(s.model, s.failure, x0, 0.0, vf.T(), mo, 2));
    }
  }

  TEST_CASE("growing error box follows the dark clock") {
    auto m = testing::drift_by_error(0.0);
    m.error = ErrorBound::linear_growth({0.5});
    const Grid g = testing::line_grid(101);
    MonteCarloOptions mo;
    mo.samples = 20;
    mo.dt = 0.05;
    const auto tr = monte_carlo_sample(m, testing::identity_failure(g), {1.0}, 0.0, 2.0, mo, 0);
    for (std::size_t k = 0; k < tr.errors.size(); ++k) {
      CHECK(tr.dark[k] == doctest::Approx(2.0 - tr.times[k]));
      CHECK(std::abs(tr.errors[k][0]) <= 0.5 * tr.dark[k] + 1e-15);
    }
  }

  TEST_CASE("monte carlo with zero error equals the nominal rollout") {
    Scenario s = small_taxi(0.0, 0.0);
    const SmallVec x0{2.0, 110.0, 0.2};
    const auto n = nominal_rollout(s.model, s.failure, x0, 0.0, 5.0, 0.01);
    for (std::size_t samples : {1u, 7u, 50u}) {
      MonteCarloOptions mo;
      mo.samples = samples;
      mo.dt = 0.01;
      CHECK(monte_carlo_value(s.model, s.failure, x0, 0.0, 5.0, mo) == n.min_l);
    }
  }

  TEST_CASE("monte carlo is monotone in the sample count and deterministic") {
    Scenario s = small_taxi(2.0, 0.1);
    const SmallVec x0{5.0, 110.0, 0.2};
    MonteCarloOptions mo;
    mo.samples = 400;
    mo.seed = 17;
    mo.dt = 0.02;
    const auto full = monte_carlo(s.model, s.failure, x0, 0.0, 5.0, mo);
    for (std::size_t k = 1; k < full.running_min.size(); ++k) CHECK(full.running_min[k] <= full.running_min[k - 1]);
    mo.samples = 1;
    const double one = monte_carlo_value(s.model, s.failure, x0, 0.0, 5.0, mo);
    CHECK(one == full.running_min[0]);
    CHECK(full.value <= one);
    mo.samples = 400;
    set_worker_count(1);
    const auto again = monte_carlo(s.model, s.failure, x0, 0.0, 5.0, mo);
    set_worker_count(0);
    CHECK(again.running_min == full.running_min);
    const auto worst = monte_carlo_sample(s.model, s.failure, x0, 0.0, 5.0, mo, full.worst_sample);
    CHECK(worst.min_l == full.value);
    mo.seed = 18;
    CHECK(monte_carlo(s.model, s.failure, x0, 0.0, 5.0, mo).running_min != full.running_min);
  }

  TEST_CASE("rollouts that leave the grid are truncated and flagged") {
    const auto vf = line_field(1.0, 1.0);
    const auto m = testing::drift_by_error(1.0);
    const auto tr = worst_case_rollout(vf, m, testing::identity_failure(vf.grid()), {-1.5}, 0.0);
    CHECK(tr.exited_grid);
    CHECK(tr.states.back()[0] < -2.0);
    CHECK(tr.times.back() < 1.0);
  }

  TEST_CASE("trajectory csv and summary") {
    const auto vf = line_field(1.0, 0.1);
    const auto m = testing::drift_by_error(1.0);
    const auto tr = worst_case_rollout(vf, m, testing::identity_failure(vf.grid()), {0.5}, 0.0);
    std::ostringstream os;
    write_trajectory_csv(os, tr);
    std::istringstream is(os.str());
    std::string header, line;
    std::getline(is, header);
    CHECK(header == "t,x0,xhat0,u0,e0,l");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      ++rows;
    }
    CHECK(rows == tr.states.size());
    const std::string json = trajectory_summary_json(tr, 0.25);
    CHECK(json.find("\"violated\":false") != std::string::npos);
    CHECK(json.find("\"runtime_s\":0.25") != std::string::npos);
  }
}
