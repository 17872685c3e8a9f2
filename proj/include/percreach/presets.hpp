#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "percreach/failure.hpp"
#include "percreach/models.hpp"
#include "percreach/solver.hpp"

namespace percreach {

struct Scenario {
  std::string name;
  ClosedLoopModel model;
  FailureSpec failure;
  Grid grid;
  SolveConfig solve;
  SmallVec x0;
};

// Error-box rungs (ebar_px, ebar_theta) for the taxiing study, smallest first.
// Rung 0 is the uncertainty-free case.
const std::vector<std::array<double, 2>>& taxiing_ladder();

// Aircraft taxiing: Dubins car at 5 m/s on [-11, 11] x [100, 250] x
// [-0.49, 0.49], tan-proportional gains a = -0.013, b = -0.44, runway edge
// |px| >= 10, horizon 20 s, x0 = (0, 100, 0). 61^3 nodes, 101^3 with full.
Scenario preset_taxiing(std::size_t coverage_index, bool full = false);
// Same scenario with an explicit error box.
Scenario taxiing_with_error(double ebar_px, double ebar_theta, bool full = false);

enum class RoverController { kMpc, kMlp };

struct RoverWorld {
  double speed = 1.0;
  std::array<double, 3> error_rates{0.1, 0.1, 0.02};
  std::vector<std::array<double, 2>> centers{{7.0, 1.0}, {13.0, -1.5}};
  std::vector<double> radii{1.5, 1.5};
  std::array<double, 2> goal{18.0, 0.0};
  double horizon = 5.0;
  std::size_t dark_samples = 51;
};

const RoverWorld& rover_world();
Grid rover_grid(bool full = false);

// Goal-seeking stand-in for an MPC: for each node, the constant turn rate in
// {-1, -0.75, ..., 1} whose 3 s rollout ends closest to the goal after an
// obstacle-proximity penalty. Deterministic; ties take the smaller rate.
Tabulated rover_mpc_table(const Grid& grid);

// Rover on [0, 20] x [-5, 5] x [-pi, pi) (heading periodic) with error growing
// at (0.1, 0.1, 0.02) per dark second. The mlp arm loads weights from
// mlp_weights (see configs/) and has no Hamiltonian set until
// attach_interval_bounds runs. The solve config covers 5 s.
Scenario preset_rover(RoverController controller, bool full = false,
                      const std::filesystem::path& mlp_weights = {});
// The rover model with zero error, used for the zero-uncertainty solve.
// Interval-bounded scenarios get bounds rebuilt for the zero error box.
Scenario rover_zero_uncertainty(const Scenario& rover);

// Builds control bounds on the scenario grid and selects them as the
// Hamiltonian. Growing error boxes get a dark-time axis of dark_samples
// points over the solve horizon.
void attach_interval_bounds(Scenario& s, std::size_t dark_samples);

// Default location of shipped configs (set at build time).
std::filesystem::path default_config_dir();

}  // namespace percreach
