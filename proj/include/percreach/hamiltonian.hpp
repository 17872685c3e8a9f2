#pragma once

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "percreach/bounds.hpp"
#include "percreach/models.hpp"

namespace percreach {

// How the solver evaluates min over (d, e) of grad . h(x, d, e).
struct ExactTanProportional {};

// Affine controller on affine dynamics; the worst error sits at a box corner.
struct ExactLinearFeedback {};

// Tabulated controller: exact minimum over every table entry reachable under
// the error box. For growing error boxes the dark clock is rounded up to a
// multiple of error_quantum seconds before enumerating. The solver widens the
// box by cell_margin grid spacings per dimension so that each node also sees
// the controls of the states around it.
struct ExactEnumerated {
  double error_quantum = 0.1;
  double cell_margin = 0.5;
};

// Sound lower bound from a precomputed control-bounds field.
struct IntervalBounded {
  std::shared_ptr<const ControlBoundsField> bounds;
};

using HamiltonianSpec = std::variant<ExactTanProportional, ExactLinearFeedback, ExactEnumerated, IntervalBounded>;

// The exact arm matching the controller; mlp controllers have none and throw
// ConfigError.
HamiltonianSpec default_hamiltonian(const ClosedLoopModel& model);

struct TanHamiltonian {
  double value = 0.0;
  SmallVec e_star;
  bool saturated = false;
};

// grad . f(x, tan(a (p + e_p) + b (th + e_th)), d*) with the closed-form worst
// errors e_p = -sgn(c a) ebar_p, e_th = -sgn(c b) ebar_th, where c is the
// control channel's costate coefficient.
TanHamiltonian ham_exact_tan(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& grad,
                             double dark_elapsed = 0.0);

struct EnumeratedHamiltonian {
  double value = 0.0;
  SmallVec u_star;
  SmallVec d_star;
  std::size_t index = 0;  // position of u_star in the candidate list
};

// Minimum over candidates (and disturbance corners) of grad . f(x, u, d).
// Throws std::logic_error on an empty candidate set.
EnumeratedHamiltonian ham_exact_enumerated(const Dynamics& dyn, const SmallVec& x, const SmallVec& grad,
                                           std::span<const SmallVec> candidates);

// Distinct control vectors reachable by a tabulated controller from x under
// the error box.
std::vector<SmallVec> enumerate_candidates(const ClosedLoopModel& model, const SmallVec& x,
                                           double dark_elapsed = 0.0);

struct BoxHamiltonian {
  double value = 0.0;
  SmallVec u_star;
  SmallVec d_star;
};

// min over u in [lower, upper] and d in the disturbance box. The minimizer is
// the corner picked by the sign of each coefficient (ties take the lower end).
BoxHamiltonian ham_lower_bound(const Dynamics& dyn, const SmallVec& x, const SmallVec& grad,
                               const ControlInterval& ubox);

struct LinearHamiltonian {
  double value = 0.0;
  SmallVec e_star;
  SmallVec d_star;
};

LinearHamiltonian ham_exact_linear(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& grad,
                                   double dark_elapsed = 0.0);

// Worst-case inputs and Hamiltonian value at an arbitrary state, for the
// arm in `spec`. IntervalBounded reads the bounds of the nearest state node;
// its e_star is a realizable error (enumeration witness for tables, best of
// the box corners and center otherwise) and exact is false.
// ExactEnumerated rounds the dark clock up to its quantum, as the solver does.
struct HamiltonianPoint {
  double value = 0.0;
  SmallVec e_star;
  SmallVec d_star;
  SmallVec u_star;
  bool exact = true;
  bool saturated = false;
};

HamiltonianPoint evaluate_hamiltonian(const ClosedLoopModel& model, const HamiltonianSpec& spec,
                                      const SmallVec& x, const SmallVec& grad, double dark_elapsed = 0.0);

// As evaluate_hamiltonian, but e_star always lies in the error box at exactly
// dark_elapsed (no rounding of the dark clock), so rollouts can apply it.
HamiltonianPoint realizable_worst_case(const ClosedLoopModel& model, const HamiltonianSpec& spec,
                                       const SmallVec& x, const SmallVec& grad, double dark_elapsed = 0.0);

// Lax-Friedrichs coefficients alpha_i >= max |dH/dgrad_i| over the grid for
// every dark time up to max_dark_elapsed.
SmallVec dissipation_coeffs(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                            double max_dark_elapsed = 0.0);

// Throws ConfigError when the arm cannot be used with this model or grid.
void validate_hamiltonian(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                          double horizon);

}  // namespace percreach
