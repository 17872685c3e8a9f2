#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "percreach/failure.hpp"
#include "percreach/hamiltonian.hpp"
#include "percreach/models.hpp"
#include "percreach/solver.hpp"

namespace percreach {

struct Trajectory {
  std::vector<double> times;
  std::vector<SmallVec> states;
  // perceived/controls/errors/disturbances/dark[k] belong to the step taken
  // from states[k], so they are one entry shorter than states.
  std::vector<SmallVec> perceived;
  std::vector<SmallVec> controls;
  std::vector<SmallVec> errors;
  std::vector<SmallVec> disturbances;
  // Dark clock that sized the error box for each step.
  std::vector<double> dark;
  std::vector<double> l;
  // Policy rollouts only: 1 where the lights were switched on before the step.
  std::vector<std::uint8_t> lights;
  double min_l = 0.0;
  bool exited_grid = false;
  bool saturated = false;

  bool violated() const { return min_l <= 0.0; }
  std::size_t light_activations() const;
};

// Gradient of the interpolated value at (x, t) by central differences with
// one grid spacing per dim (one-sided at non-periodic edges).
SmallVec value_gradient(const ValueField& vf, const SmallVec& x, double t);

struct RolloutOptions {
  std::optional<HamiltonianSpec> hamiltonian;
  // 0 uses the field's solver step.
  double dt = 0.0;
};

// Explicit-Euler rollout from (x0, t0) to the field's final time with the
// adversary replanned every step from the value gradient. The error box at
// time t uses the solver's dark clock T - t. A state leaving a non-periodic
// grid range ends the trajectory with exited_grid set.
Trajectory worst_case_rollout(const ValueField& vf, const ClosedLoopModel& model, const FailureSpec& failure,
                              const SmallVec& x0, double t0, const RolloutOptions& opts = {});

// e = 0 and d at the disturbance box center (empty when there is none).
Trajectory nominal_rollout(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                           double T, double dt);

struct MonteCarloOptions {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  double dt = 0.0;  // required, > 0
};

struct MonteCarloResult {
  double value = 0.0;
  // running_min[k] = min over samples 0..k.
  std::vector<double> running_min;
  std::size_t worst_sample = 0;
};

// Min of l over sampled trajectories. Errors are uniform in the box
// ebar(T - t), redrawn once per step; disturbances likewise. Each sample has
// its own generator seeded from (seed, sample index), so results do not depend
// on the worker count.
MonteCarloResult monte_carlo(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                             double T, const MonteCarloOptions& opts);
double monte_carlo_value(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                         double T, const MonteCarloOptions& opts);
// The trajectory of one sample, regenerated from its substream.
Trajectory monte_carlo_sample(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                              double T, const MonteCarloOptions& opts, std::size_t index);

// Columns: t, x0.., xhat0.., u0.., e0.., l (plus lights when present). The
// final state's row leaves the per-step cells empty.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
// One-line JSON object with min_l, violated, exited_grid, steps and runtime.
std::string trajectory_summary_json(const Trajectory& traj, double seconds);

}  // namespace percreach
