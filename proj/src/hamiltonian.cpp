#include "percreach/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "detail.hpp"
#include "kernels.hpp"
#include "percreach/errors.hpp"

namespace percreach {

namespace {

using detail::Overloaded;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double enumerated_dark(const ExactEnumerated& spec, const ErrorBound& error, double dark) {
  if (!error.time_varying()) return 0.0;
  const double q = std::ceil(std::max(dark, 0.0) / spec.error_quantum - 1e-9);
  return q * spec.error_quantum;
}

// Error in the box that sends the estimate into `cell`'s nearest-node region,
// or nullopt when rounding defeats the construction.
std::optional<SmallVec> error_into_cell(const ClosedLoopModel& model, const Tabulated& table, std::size_t cell,
                                        const SmallVec& x, const SmallVec& half) {
  const Grid& g = table.grid;
  const SmallVec xh = model.estimate(x, SmallVec(x.size()));
  std::size_t rest = cell;
  SmallVec e(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const std::size_t k = (rest / g.stride(d)) % g.shape(d);
    double delta = g.coordinate(d, k) - xh[d];
    if (g.periodic(d)) {
      const double p = g.period(d);
      delta -= p * std::floor(delta / p + 0.5);
    }
    e[d] = std::clamp(delta, -half[d], half[d]);
  }
  if (tabulated_cell(table, model.estimate(x, e)) != cell) return std::nullopt;
  return e;
}

double closed_loop_dot(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& grad, const SmallVec& e,
                       const SmallVec& d) {
  return dot(grad, model.dynamics.evaluate(x, model.control(x, e).u, d));
}

// Best realizable error among box corners and the center.
SmallVec corner_search(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& grad, const SmallVec& half,
                       const SmallVec& d) {
  const std::size_t n = x.size();
  SmallVec best(n);
  double best_val = closed_loop_dot(model, x, grad, best, d);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    SmallVec e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = (mask >> i & 1U) ? half[i] : -half[i];
    const double v = closed_loop_dot(model, x, grad, e, d);
    if (v < best_val) {
      best_val = v;
      best = e;
    }
  }
  return best;
}

}  // namespace

HamiltonianSpec default_hamiltonian(const ClosedLoopModel& model) {
  return std::visit(Overloaded{[](const TanProportional&) -> HamiltonianSpec { return ExactTanProportional{}; },
                               [](const LinearFeedback&) -> HamiltonianSpec { return ExactLinearFeedback{}; },
                               [](const Tabulated&) -> HamiltonianSpec { return ExactEnumerated{}; },
                               [](const Mlp&) -> HamiltonianSpec {
                                 throw ConfigError("mlp controllers have no exact Hamiltonian; supply control bounds");
                               }},
                    model.controller.model());
}

TanHamiltonian ham_exact_tan(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& grad,
                             double dark_elapsed) {
  const auto* c = std::get_if<TanProportional>(&model.controller.model());
  if (!c) throw ConfigError("ham_exact_tan needs a tan-proportional controller");
  const SmallVec half = model.error.half_widths(dark_elapsed);
  const double beta = model.dynamics.control_coefficients(x, grad)[0];
  TanHamiltonian out;
  out.e_star = SmallVec(x.size());
  out.e_star[c->position_dim] = -sign(beta * c->a) * half[c->position_dim];
  out.e_star[c->heading_dim] = -sign(beta * c->b) * half[c->heading_dim];
  const double arg = c->a * (x[c->position_dim] + out.e_star[c->position_dim]) +
                     c->b * (x[c->heading_dim] + out.e_star[c->heading_dim]);
  const double u = std::tan(clamp_tan_argument(arg, &out.saturated));
  out.value = dot(grad, model.dynamics.drift(x)) + beta * u + model.dynamics.min_disturbance_term(x, grad);
  return out;
}

EnumeratedHamiltonian ham_exact_enumerated(const Dynamics& dyn, const SmallVec& x, const SmallVec& grad,
                                           std::span<const SmallVec> candidates) {
  if (candidates.empty()) throw std::logic_error("enumerated Hamiltonian called with no candidates");
  EnumeratedHamiltonian out;
  const SmallVec coeff = dyn.control_coefficients(x, grad);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = dot(coeff, candidates[i]);
    if (v < best) {
      best = v;
      out.index = i;
    }
  }
  out.u_star = candidates[out.index];
  out.value = dot(grad, dyn.drift(x)) + best + dyn.min_disturbance_term(x, grad, &out.d_star);
  return out;
}

std::vector<SmallVec> enumerate_candidates(const ClosedLoopModel& model, const SmallVec& x, double dark_elapsed) {
  const auto* table = std::get_if<Tabulated>(&model.controller.model());
  if (!table) throw ConfigError("enumeration needs a tabulated controller");
  const SmallVec half = model.error.half_widths(dark_elapsed);
  const Enumeration en = enumerate_table(*table, model.estimate(x, SmallVec(x.size())), half);
  std::vector<SmallVec> out;
  const std::size_t cd = table->control_dims;
  for (std::size_t cell : en.cells) {
    const SmallVec u(std::span<const double>(table->table).subspan(cell * cd, cd));
    if (std::find(out.begin(), out.end(), u) == out.end()) out.push_back(u);
  }
  return out;
}

BoxHamiltonian ham_lower_bound(const Dynamics& dyn, const SmallVec& x, const SmallVec& grad,
                               const ControlInterval& ubox) {
  if (!dyn.control_affine()) throw ConfigError("interval lower bound needs control-affine dynamics");
  const SmallVec coeff = dyn.control_coefficients(x, grad);
  if (ubox.lower.size() != coeff.size() || ubox.upper.size() != coeff.size()) {
    throw ArgumentError("control box dims differ from the dynamics control dims");
  }
  BoxHamiltonian out;
  out.u_star = SmallVec(coeff.size());
  double h = dot(grad, dyn.drift(x));
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    out.u_star[k] = coeff[k] < 0.0 ? ubox.upper[k] : ubox.lower[k];
    h += coeff[k] * out.u_star[k];
  }
  out.value = h + dyn.min_disturbance_term(x, grad, &out.d_star);
  return out;
}

LinearHamiltonian ham_exact_linear(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& grad,
                                   double dark_elapsed) {
  const auto* fb = std::get_if<LinearFeedback>(&model.controller.model());
  if (!fb) throw ConfigError("ham_exact_linear needs a linear-feedback controller");
  const SmallVec half = model.error.half_widths(dark_elapsed);
  const SmallVec coeff = model.dynamics.control_coefficients(x, grad);
  LinearHamiltonian out;
  out.e_star = SmallVec(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    double w = 0.0;
    for (std::size_t k = 0; k < coeff.size(); ++k) {
      w += coeff[k] * fb->gain(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    }
    out.e_star[j] = -sign(w) * half[j];
  }
  const SmallVec u = model.control(x, out.e_star).u;
  out.value = dot(grad, model.dynamics.drift(x)) + dot(coeff, u) +
              model.dynamics.min_disturbance_term(x, grad, &out.d_star);
  return out;
}

namespace {

HamiltonianPoint point_impl(const ClosedLoopModel& model, const HamiltonianSpec& spec, const SmallVec& x,
                            const SmallVec& grad, double dark_elapsed, bool realizable) {
  HamiltonianPoint out;
  std::visit(
      Overloaded{
          [&](const ExactTanProportional&) {
            const TanHamiltonian h = ham_exact_tan(model, x, grad, dark_elapsed);
            out.value = h.value;
            out.e_star = h.e_star;
            out.saturated = h.saturated;
            model.dynamics.min_disturbance_term(x, grad, &out.d_star);
            out.u_star = model.control(x, out.e_star).u;
          },
          [&](const ExactLinearFeedback&) {
            const LinearHamiltonian h = ham_exact_linear(model, x, grad, dark_elapsed);
            out.value = h.value;
            out.e_star = h.e_star;
            out.d_star = h.d_star;
            out.u_star = model.control(x, out.e_star).u;
          },
          [&](const ExactEnumerated& s) {
            const auto& table = std::get<Tabulated>(model.controller.model());
            const double dark = realizable ? dark_elapsed : enumerated_dark(s, model.error, dark_elapsed);
            const SmallVec half = model.error.half_widths(dark);
            const Enumeration en = enumerate_table(table, model.estimate(x, SmallVec(x.size())), half);
            const std::vector<SmallVec> cands = enumerate_candidates(model, x, dark);
            const EnumeratedHamiltonian h = ham_exact_enumerated(model.dynamics, x, grad, cands);
            out.value = h.value;
            out.u_star = h.u_star;
            out.d_star = h.d_star;
            const std::size_t cd = table.control_dims;
            for (std::size_t cell : en.cells) {
              if (SmallVec(std::span<const double>(table.table).subspan(cell * cd, cd)) != h.u_star) continue;
              if (auto e = error_into_cell(model, table, cell, x, half)) {
                out.e_star = *e;
                return;
              }
            }
            // Rounding kept every witness out of its cell; report the nearest try.
            out.exact = false;
            out.e_star = corner_search(model, x, grad, half, out.d_star);
          },
          [&](const IntervalBounded& s) {
            if (!s.bounds) throw ConfigError("interval-bounded Hamiltonian has no bounds field");
            const ControlBoundsField& f = *s.bounds;
            const Grid sg = f.state_grid();
            std::vector<std::size_t> idx(sg.dims());
            for (std::size_t d = 0; d < sg.dims(); ++d) idx[d] = sg.nearest_index(d, sg.wrap(d, x[d]));
            const std::size_t q = f.dark_index_for(dark_elapsed);
            const BoxHamiltonian h = ham_lower_bound(model.dynamics, x, grad, f.at(sg.ravel(idx), q));
            out.value = h.value;
            out.d_star = h.d_star;
            out.exact = false;
            const double dark = realizable || !f.has_dark_time() ? dark_elapsed : f.dark_time(q);
            const SmallVec half = model.error.half_widths(dark);
            out.e_star = SmallVec(x.size());
            if (const auto* table = std::get_if<Tabulated>(&model.controller.model())) {
              const std::vector<SmallVec> cands = enumerate_candidates(model, x, dark);
              const EnumeratedHamiltonian best = ham_exact_enumerated(model.dynamics, x, grad, cands);
              const Enumeration en = enumerate_table(*table, model.estimate(x, SmallVec(x.size())), half);
              const std::size_t cd = table->control_dims;
              bool found = false;
              for (std::size_t cell : en.cells) {
                if (SmallVec(std::span<const double>(table->table).subspan(cell * cd, cd)) != best.u_star) continue;
                if (auto e = error_into_cell(model, *table, cell, x, half)) {
                  out.e_star = *e;
                  found = true;
                  break;
                }
              }
              if (!found) out.e_star = corner_search(model, x, grad, half, out.d_star);
            } else {
              out.e_star = corner_search(model, x, grad, half, out.d_star);
            }
            out.u_star = model.control(x, out.e_star).u;
          }},
      spec);
  return out;
}

}  // namespace

HamiltonianPoint evaluate_hamiltonian(const ClosedLoopModel& model, const HamiltonianSpec& spec, const SmallVec& x,
                                      const SmallVec& grad, double dark_elapsed) {
  return point_impl(model, spec, x, grad, dark_elapsed, false);
}

HamiltonianPoint realizable_worst_case(const ClosedLoopModel& model, const HamiltonianSpec& spec, const SmallVec& x,
                                       const SmallVec& grad, double dark_elapsed) {
  return point_impl(model, spec, x, grad, dark_elapsed, true);
}

namespace detail {

AnyKernel make_kernel(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid, double max_dark) {
  auto with_view = [&](auto view) -> AnyKernel {
    using View = decltype(view);
    return std::visit(
        Overloaded{
            [&](const ExactTanProportional&) -> AnyKernel { return TanKernel<View>(view, model, grid, max_dark); },
            [&](const ExactLinearFeedback&) -> AnyKernel {
              return LinearFeedbackKernel<View>(view, model, grid, max_dark);
            },
            [&](const ExactEnumerated& s) -> AnyKernel {
              return EnumeratedKernel<View>(view, model, grid, s, max_dark);
            },
            [&](const IntervalBounded& s) -> AnyKernel {
              if (!s.bounds) throw ConfigError("interval-bounded Hamiltonian has no bounds field");
              return BoundedKernel<View>(view, *s.bounds, grid);
            }},
        spec);
  };
  return std::visit(
      Overloaded{[&](const Dubins3D& m) { return with_view(DubinsView(m, grid)); },
                 [&](const LinearDynamics& m) {
                   return with_view(LinearView(m, model.dynamics.disturbance(), grid));
                 }},
      model.dynamics.model());
}

}  // namespace detail

SmallVec dissipation_coeffs(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                            double max_dark_elapsed) {
  validate_hamiltonian(model, spec, grid, max_dark_elapsed);
  const detail::AnyKernel k = detail::make_kernel(model, spec, grid, max_dark_elapsed);
  return std::visit([](const auto& kernel) { return kernel.dissipation(); }, k);
}

void validate_hamiltonian(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                          double horizon) {
  const std::size_t n = model.dynamics.state_dims();
  if (grid.dims() != n) throw ConfigError("grid dims differ from the state dims");
  if (model.error.dims() != n) throw ConfigError("error box dims differ from the state dims");
  if (model.controller.state_dims() != n) throw ConfigError("controller state dims differ from the dynamics");
  if (model.controller.control_dims() != model.dynamics.control_dims()) {
    throw ConfigError("controller output dims differ from the dynamics control dims");
  }
  for (std::size_t d : model.angle_dims) {
    if (d >= n) throw ConfigError("angle dim out of range");
  }
  const auto& ctrl = model.controller.model();
  std::visit(
      Overloaded{
          [&](const ExactTanProportional&) {
            const auto* c = std::get_if<TanProportional>(&ctrl);
            if (!c) throw ConfigError("exact tan Hamiltonian needs a tan-proportional controller");
            if (std::find(model.angle_dims.begin(), model.angle_dims.end(), c->heading_dim) != model.angle_dims.end() ||
                std::find(model.angle_dims.begin(), model.angle_dims.end(), c->position_dim) != model.angle_dims.end()) {
              throw ConfigError("exact tan Hamiltonian needs unwrapped controller inputs");
            }
          },
          [&](const ExactLinearFeedback&) {
            if (!std::holds_alternative<LinearFeedback>(ctrl)) {
              throw ConfigError("exact linear Hamiltonian needs a linear-feedback controller");
            }
            if (!model.angle_dims.empty()) throw ConfigError("exact linear Hamiltonian needs unwrapped inputs");
          },
          [&](const ExactEnumerated& s) {
            const auto* t = std::get_if<Tabulated>(&ctrl);
            if (!t) throw ConfigError("exact enumerated Hamiltonian needs a tabulated controller");
            if (t->grid.dims() != n) throw ConfigError("time-indexed tables cannot be enumerated by the solver");
            if (!(s.error_quantum > 0.0) || !std::isfinite(s.error_quantum)) {
              throw ConfigError("error_quantum must be finite and > 0");
            }
          },
          [&](const IntervalBounded& s) {
            if (!s.bounds) throw ConfigError("interval-bounded Hamiltonian has no bounds field");
            if (!(s.bounds->state_grid() == grid)) throw ConfigError("control-bounds grid differs from the solver grid");
            if (s.bounds->control_dims() != model.dynamics.control_dims()) {
              throw ConfigError("control-bounds dims differ from the dynamics control dims");
            }
            if (model.error.time_varying()) {
              if (!s.bounds->has_dark_time()) throw ConfigError("growing error needs bounds with a dark-time axis");
              const Grid& g = s.bounds->grid();
              if (g.hi(g.dims() - 1) < horizon * (1.0 - 1e-12)) {
                throw ConfigError("control-bounds dark-time axis ends before the horizon");
              }
            }
          }},
      spec);
}

}  // namespace percreach
