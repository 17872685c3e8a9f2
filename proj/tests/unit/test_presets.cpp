#include <chrono>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "percreach/errors.hpp"
#include "percreach/presets.hpp"
#include "support.hpp"

using namespace percreach;

TEST_SUITE("presets") {
  TEST_CASE("taxiing preset") {
    const Scenario s = preset_taxiing(0);
    CHECK(s.solve.T - s.solve.t0 == 20.0);
    CHECK(s.grid == Grid({-11.0, 100.0, -0.49}, {11.0, 250.0, 0.49}, {61, 61, 61}, {false, false, false}));
    CHECK(preset_taxiing(0, true).grid.shape(0) == 101);
    CHECK(s.x0 == SmallVec{0.0, 100.0, 0.0});
    const auto& dyn = std::get<Dubins3D>(s.model.dynamics.model());
    CHECK(dyn.speed == 5.0);
    const auto& c = std::get<TanProportional>(s.model.controller.model());
    CHECK(c.a == -0.013);
    CHECK(c.b == -0.44);
    CHECK(s.model.error.values() == SmallVec{0.0, 0.0, 0.0});
    CHECK(s.failure.evaluate({10.0, 120.0, 0.0}) == 0.0);
    CHECK_THROWS_AS(preset_taxiing(taxiing_ladder().size()), ConfigError);
  }

  TEST_CASE("the ladder grows rung by rung") {
    const auto& ladder = taxiing_ladder();
    REQUIRE(ladder.size() == 5);
    CHECK(ladder[0] == std::array<double, 2>{0.0, 0.0});
    for (std::size_t k = 1; k < ladder.size(); ++k) {
      CHECK(ladder[k][0] > ladder[k - 1][0]);
      CHECK(ladder[k][1] > ladder[k - 1][1]);
      const Scenario s = preset_taxiing(k);
      CHECK(s.model.error.values()[0] == ladder[k][0]);
      CHECK(s.model.error.values()[2] == ladder[k][1]);
    }
  }

  TEST_CASE("rover world") {
    const RoverWorld& w = rover_world();
    CHECK(w.speed == 1.0);
    CHECK(w.horizon == 5.0);
    const Grid g = rover_grid();
    CHECK(g.lo(0) == 0.0);
    CHECK(g.hi(0) == 20.0);
    CHECK(g.lo(1) == -5.0);
    CHECK(g.hi(1) == 5.0);
    CHECK(g.periodic(2));
    CHECK(g.period(2) == doctest::Approx(2.0 * std::numbers::pi));
  }

  TEST_CASE("mpc table is deterministic and uses the turn-rate alphabet") {
    const Grid g({0.0, -5.0, -std::numbers::pi}, {20.0, 5.0, std::numbers::pi}, {11, 9, 12}, {false, false, true});
    const Tabulated a = rover_mpc_table(g), b = rover_mpc_table(g);
    CHECK(a.table == b.table);
    CHECK(a.grid == g);
    for (double u : a.table) {
      CHECK(u >= -1.0);
      CHECK(u <= 1.0);
      CHECK(std::abs(u * 4.0 - std::round(u * 4.0)) < 1e-12);
    }
    // Facing away from the goal the controller turns.
    const std::size_t behind = tabulated_cell(a, {2.0, 0.0, -std::numbers::pi / 2});
    CHECK(a.table[behind] != 0.0);
  }

  TEST_CASE("rover presets") {
    const Scenario mpc = preset_rover(RoverController::kMpc);
    CHECK(mpc.x0 == SmallVec{2.0, 0.0, std::numbers::pi / 2});
    CHECK(mpc.model.error.time_varying());
    CHECK(mpc.model.error.values() == SmallVec{0.1, 0.1, 0.02});
    CHECK(mpc.model.angle_dims == std::vector<std::size_t>{2});
    REQUIRE(mpc.solve.hamiltonian.has_value());
    CHECK(std::holds_alternative<ExactEnumerated>(*mpc.solve.hamiltonian));
    CHECK(mpc.solve.boundary == BoundaryRule::kZeroGradient);
    CHECK(mpc.failure.evaluate({7.0, 1.0, 0.0}) == -1.5);

    const Scenario zero = rover_zero_uncertainty(mpc);
    CHECK_FALSE(zero.model.error.time_varying());
    CHECK(zero.model.error.half_widths(5.0) == SmallVec{0.0, 0.0, 0.0});
    CHECK(zero.solve.boundary == BoundaryRule::kZeroGradient);
    CHECK(preset_taxiing(0).solve.boundary == BoundaryRule::kExtrapolate);

    const Scenario mlp = preset_rover(RoverController::kMlp);
    CHECK(std::holds_alternative<Mlp>(mlp.model.controller.model()));
    CHECK_FALSE(mlp.solve.hamiltonian.has_value());
    CHECK_THROWS_AS(preset_rover(RoverController::kMlp, false, "/nonexistent/weights.bin"), std::exception);
  }

  TEST_CASE("interval bounds attach with a dark-time axis") {
    Scenario s = preset_rover(RoverController::kMlp);
    s.grid = Grid({0.0, -5.0, -std::numbers::pi}, {20.0, 5.0, std::numbers::pi}, {6, 5, 8}, {false, false, true});
    CHECK_THROWS_AS(attach_interval_bounds(s, 2), ConfigError);
    attach_interval_bounds(s, 6);
    REQUIRE(s.solve.hamiltonian.has_value());
    const auto& ib = std::get<IntervalBounded>(*s.solve.hamiltonian);
    CHECK(ib.bounds->has_dark_time());
    CHECK(ib.bounds->dark_samples() == 6);
    CHECK(ib.bounds->dark_time(5) == 5.0);
    const Scenario zero = rover_zero_uncertainty(s);
    const auto& zb = std::get<IntervalBounded>(*zero.solve.hamiltonian);
    CHECK_FALSE(zb.bounds->has_dark_time());
  }

  TEST_CASE("shipped configs are found") {
    CHECK(std::filesystem::exists(default_config_dir() / "rover_mlp.bin"));
    CHECK(std::filesystem::exists(default_config_dir() / "taxiing.json"));
  }
}
