#include "percreach/presets.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>

#include "percreach/bounds.hpp"
#include "percreach/errors.hpp"
#include "percreach/parallel.hpp"

#ifndef PERCREACH_CONFIG_DIR
#define PERCREACH_CONFIG_DIR "configs"
#endif

namespace percreach {

const std::vector<std::array<double, 2>>& taxiing_ladder() {
  static const std::vector<std::array<double, 2>> ladder{
      {0.0, 0.0}, {0.5, 0.02}, {1.0, 0.05}, {2.0, 0.1}, {4.0, 0.2}};
  return ladder;
}

Scenario taxiing_with_error(double ebar_px, double ebar_theta, bool full) {
  const std::size_t n = full ? 101 : 61;
  Grid grid({-11.0, 100.0, -0.49}, {11.0, 250.0, 0.49}, {n, n, n}, {false, false, false});
  ClosedLoopModel model{Dynamics::dubins3d(5.0), Controller(TanProportional{-0.013, -0.44, 0, 2}, 3),
                        ErrorBound::static_box({ebar_px, 0.0, ebar_theta}), {}};
  SolveConfig cfg;
  cfg.t0 = 0.0;
  cfg.T = 20.0;
  cfg.hamiltonian = ExactTanProportional{};
  return {"taxiing", std::move(model), FailureSpec(SlabKeepout{0, 10.0}), std::move(grid), cfg, {0.0, 100.0, 0.0}};
}

Scenario preset_taxiing(std::size_t coverage_index, bool full) {
  const auto& ladder = taxiing_ladder();
  if (coverage_index >= ladder.size()) {
    throw ConfigError("coverage_index must be below " + std::to_string(ladder.size()));
  }
  return taxiing_with_error(ladder[coverage_index][0], ladder[coverage_index][1], full);
}

const RoverWorld& rover_world() {
  static const RoverWorld w;
  return w;
}

Grid rover_grid(bool full) {
  const std::size_t n = full ? 101 : 61;
  return Grid({0.0, -5.0, -std::numbers::pi}, {20.0, 5.0, std::numbers::pi}, {n, n, n}, {false, false, true});
}

Tabulated rover_mpc_table(const Grid& grid) {
  const RoverWorld& w = rover_world();
  constexpr int kChoices = 9;
  constexpr double kLookahead = 3.0;
  constexpr double kStep = 0.1;
  constexpr double kClearance = 1.0;
  constexpr double kPenalty = 20.0;
  const auto steps = static_cast<int>(std::lround(kLookahead / kStep));
  const FailureSpec obstacles(CircularObstacles{w.centers, w.radii, 0, 1});

  std::vector<double> table(grid.size());
  const auto total = static_cast<long long>(grid.size());
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (long long i = 0; i < total; ++i) {
    const SmallVec x0 = grid.point(static_cast<std::size_t>(i));
    double best_cost = std::numeric_limits<double>::infinity();
    double best_u = 0.0;
    for (int c = 0; c < kChoices; ++c) {
      const double u = -1.0 + 0.25 * c;
      double px = x0[0], py = x0[1], th = x0[2];
      double cost = 0.0;
      for (int s = 0; s < steps; ++s) {
        px += kStep * w.speed * std::sin(th);
        py += kStep * w.speed * std::cos(th);
        th += kStep * u;
        const double l = obstacles.evaluate({px, py, th});
        if (l < kClearance) cost += kPenalty * kStep * (kClearance - l);
        if (std::abs(py) > 4.5) cost += kPenalty * kStep * (std::abs(py) - 4.5);
      }
      cost += std::hypot(px - w.goal[0], py - w.goal[1]);
      if (cost < best_cost) {
        best_cost = cost;
        best_u = u;
      }
    }
    table[static_cast<std::size_t>(i)] = best_u;
  }
  return Tabulated{grid, 1, std::move(table), {-1.0}, {1.0}};
}

std::filesystem::path default_config_dir() {
  if (const char* env = std::getenv("PERCREACH_CONFIG_DIR")) return env;
  return PERCREACH_CONFIG_DIR;
}

Scenario preset_rover(RoverController controller, bool full, const std::filesystem::path& mlp_weights) {
  const RoverWorld& w = rover_world();
  Grid grid = rover_grid(full);
  Controller ctrl = [&] {
    if (controller == RoverController::kMpc) return Controller(rover_mpc_table(grid), 3);
    const auto path = mlp_weights.empty() ? default_config_dir() / "rover_mlp.bin" : mlp_weights;
    return Controller(load_mlp(path), 3);
  }();
  ClosedLoopModel model{Dynamics::dubins3d(w.speed), std::move(ctrl),
                        ErrorBound::linear_growth({w.error_rates[0], w.error_rates[1], w.error_rates[2]}), {2}};
  SolveConfig cfg;
  cfg.t0 = 0.0;
  cfg.T = w.horizon;
  // The edges cut through free space.
  cfg.boundary = BoundaryRule::kZeroGradient;
  if (controller == RoverController::kMpc) cfg.hamiltonian = ExactEnumerated{};
  return {controller == RoverController::kMpc ? "rover-mpc" : "rover-mlp", std::move(model),
          FailureSpec(CircularObstacles{w.centers, w.radii, 0, 1}), std::move(grid), cfg, {2.0, 0.0, std::numbers::pi / 2}};
}

Scenario rover_zero_uncertainty(const Scenario& rover) {
  Scenario s = rover;
  s.name = rover.name + "-zero";
  s.model.error = ErrorBound::none(rover.model.dynamics.state_dims());
  const bool bounded = s.solve.hamiltonian && std::holds_alternative<IntervalBounded>(*s.solve.hamiltonian);
  if (bounded || std::holds_alternative<Mlp>(s.model.controller.model())) attach_interval_bounds(s, 0);
  return s;
}

void attach_interval_bounds(Scenario& s, std::size_t dark_samples) {
  std::optional<DarkTimeAxis> axis;
  if (s.model.error.time_varying()) {
    if (dark_samples < 3) throw ConfigError("growing error boxes need at least 3 dark-time samples");
    axis = DarkTimeAxis{s.solve.T - s.solve.t0, dark_samples};
  }
  auto field = std::make_shared<const ControlBoundsField>(build_bounds_field(s.model, s.grid, axis));
  s.solve.hamiltonian = IntervalBounded{std::move(field)};
}

}  // namespace percreach
