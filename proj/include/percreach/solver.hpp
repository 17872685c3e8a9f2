#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "percreach/failure.hpp"
#include "percreach/grid.hpp"
#include "percreach/hamiltonian.hpp"
#include "percreach/models.hpp"

namespace percreach {

// Ghost values at non-periodic edges. kExtrapolate reuses the outermost
// interior difference, exact on affine fields but not monotone at inflow
// edges. kZeroGradient copies the edge value, which keeps the scheme monotone
// and suits domains truncated in free space.
enum class BoundaryRule { kExtrapolate, kZeroGradient };

struct SolveConfig {
  double t0 = 0.0;
  double T = 1.0;
  double cfl = 0.5;
  // Steps between stored slices; 0 picks the smallest stride that keeps the
  // stored slices under memory_cap_bytes.
  std::size_t save_stride = 0;
  std::size_t memory_cap_bytes = std::size_t{256} << 20;
  BoundaryRule boundary = BoundaryRule::kExtrapolate;
  // Unset means default_hamiltonian(model).
  std::optional<HamiltonianSpec> hamiltonian;
};

struct SolveStats {
  std::size_t steps = 0;
  double dt = 0.0;
  std::size_t save_stride = 1;
  SmallVec dissipation;
  // Tan-argument clamps seen while tabulating the Hamiltonian.
  std::size_t saturations = 0;
  double seconds = 0.0;
};

// Stored value slices, newest time first: times()[0] == T, times().back() == t0.
class ValueField {
 public:
  ValueField() = default;
  // Throws ArgumentError when times are not strictly descending, a slice grid
  // differs from the failure grid, or there are no slices.
  ValueField(ScalarField failure, std::vector<double> times, std::vector<ScalarField> slices, double dt = 0.0);

  const Grid& grid() const { return failure_.grid(); }
  const ScalarField& failure() const { return failure_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<ScalarField>& slices() const { return slices_; }
  double t0() const { return times_.back(); }
  double T() const { return times_.front(); }
  double dt() const { return dt_; }
  // Slice stored at t0.
  const ScalarField& initial() const { return slices_.back(); }

  SolveStats stats;
  std::vector<std::string> warnings;

 private:
  ScalarField failure_;
  std::vector<double> times_;
  std::vector<ScalarField> slices_;
  double dt_ = 0.0;
};

// Marches the HJI variational inequality from V(., T) = l backward to t0.
// Each Heun stage uses min(H_LF, 0), the tube form, and every full step ends
// with V <- min(V, l). The dark clock of a growing error box is identified with T - t.
// Throws ConfigError for inconsistent inputs or step underflow and
// SolverError when a non-finite value appears.
ValueField solve(const ClosedLoopModel& model, const FailureSpec& failure, const Grid& grid,
                 const SolveConfig& cfg);

struct TimeStepPlan {
  std::size_t steps = 1;
  double dt = 0.0;
  SmallVec dissipation;
};

// The step count and size solve would use, without marching.
TimeStepPlan plan_time_step(const ClosedLoopModel& model, const Grid& grid, const SolveConfig& cfg);

// Multilinear in space, linear between the bracketing slices in time.
// Throws ArgumentError when t lies outside [t0, T].
double query_value(const ValueField& vf, const SmallVec& x, double t);
// As query_value, also reporting whether the spatial query was clamped.
Interpolated query_value_checked(const ValueField& vf, const SmallVec& x, double t);

// Numerical Hamiltonian rate dV/d(T - t) at every node for the given values,
// using the solver's kernel. Exposed so tests can check it against the
// pointwise Hamiltonian.
std::vector<double> numerical_rate(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                                   std::span<const double> values, double dark_elapsed, double max_dark,
                                   BoundaryRule boundary = BoundaryRule::kExtrapolate);

// "RVVF": magic, version u32, slice count u32, dt f64, then the failure field
// and each slice as (time f64, RVCF block).
void write_value_field(std::ostream& os, const ValueField& vf);
ValueField read_value_field(std::istream& is);
void save_value_field(const std::filesystem::path& path, const ValueField& vf);
ValueField load_value_field(const std::filesystem::path& path);

}  // namespace percreach
