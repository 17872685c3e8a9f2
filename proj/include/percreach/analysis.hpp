#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "percreach/failure.hpp"
#include "percreach/rollout.hpp"
#include "percreach/solver.hpp"

namespace percreach {

// True iff the interpolated value at (x, t) is <= 0.
bool brt_membership(const ValueField& vf, const SmallVec& x, double t);

// Sum of dual-cell volumes over nodes whose value at t is > 0. Between stored
// slices the node values are interpolated linearly in time.
double safe_volume(const ValueField& vf, double t);

struct SweepFailure {
  std::size_t a_index = 0;
  std::size_t b_index = 0;
  std::string message;
};

struct SweepResult {
  std::vector<double> a_values;
  std::vector<double> b_values;
  // values[i * b_values.size() + j] for (a_values[i], b_values[j]); NaN marks
  // a failed cell.
  std::vector<double> values;
  std::size_t best_a = 0;
  std::size_t best_b = 0;
  bool has_best = false;
  std::vector<SweepFailure> failures;

  double at(std::size_t i, std::size_t j) const { return values[i * b_values.size() + j]; }
};

// Solves once per (a, b) gain pair of a tan-proportional template and records
// V(x0, t0). Cell failures are recorded and the sweep continues.
SweepResult sweep_hyperparameters(const ClosedLoopModel& templ, const std::vector<double>& a_values,
                                  const std::vector<double>& b_values, const FailureSpec& failure, const Grid& grid,
                                  const SolveConfig& cfg, const SmallVec& x0);
// Columns a, b, value; failed cells print "nan".
void write_sweep_csv(std::ostream& os, const SweepResult& result);

// Maximum safe dark duration per spatial node.
class DarkBudgetField {
 public:
  DarkBudgetField() = default;
  // Throws ArgumentError on size mismatch or negative / non-finite entries.
  DarkBudgetField(Grid grid, std::vector<double> tau_star, double horizon);

  const Grid& grid() const { return grid_; }
  std::span<const double> tau_star() const { return tau_; }
  double horizon() const { return horizon_; }
  // Multilinear interpolation of tau*.
  double at(const SmallVec& x) const;
  ScalarField as_field() const { return ScalarField(grid_, tau_); }

  friend bool operator==(const DarkBudgetField& a, const DarkBudgetField& b) {
    return a.grid_ == b.grid_ && a.tau_ == b.tau_ && a.horizon_ == b.horizon_;
  }

 private:
  Grid grid_;
  std::vector<double> tau_;
  double horizon_ = 0.0;
};

struct DarkBudgetResult {
  DarkBudgetField budget;
  // Growing-uncertainty solve against the surrogate failure l'.
  ValueField growing;
};

// Surrogate failure l' = zero-uncertainty value at its t0; solves the growing
// error model against l' over [0, horizon] and reads tau* from the stored
// slices. cfg.t0/cfg.T are replaced by 0/horizon.
DarkBudgetResult synthesize_dark_budget(const ClosedLoopModel& growth_model, const ValueField& zero_uncertainty,
                                        double horizon, SolveConfig cfg);
// tau* read from a growing-uncertainty field: largest tau with
// V(x, T - tau) > 0, with linear interpolation at the sign change, and 0 where
// the surrogate value is <= 0.
DarkBudgetField dark_budget_from(const ValueField& growing);

// "RVDB": magic, version u32, horizon f64, then an RVCF block of tau*.
void save_dark_budget(const std::filesystem::path& path, const DarkBudgetField& budget);
DarkBudgetField load_dark_budget(const std::filesystem::path& path);

enum class LightAction : std::uint8_t { kKeepOff = 0, kLightsOn = 1 };

// Lights on iff elapsed_dark + margin >= tau*(x).
LightAction light_policy_step(const DarkBudgetField& budget, const SmallVec& x, double elapsed_dark, double margin);

struct PolicyRolloutOptions {
  double horizon = 5.0;
  double dt = 0.0;      // required, > 0
  double margin = 0.0;  // 0 means two steps
  std::optional<HamiltonianSpec> hamiltonian;
};

// Closed-loop rollout from x0 with the light policy in the loop. The dark clock
// is the physical time since the last activation; switching the lights on
// resets it to zero before the step. The adversary picks the error that
// drives the state fastest toward the surrogate failure set l' (the
// zero-uncertainty value at t0).
Trajectory policy_rollout(const DarkBudgetField& budget, const ValueField& zero_uncertainty,
                          const ClosedLoopModel& growth_model, const FailureSpec& failure, const SmallVec& x0,
                          const PolicyRolloutOptions& opts);

}  // namespace percreach
