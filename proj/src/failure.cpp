#include "percreach/failure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "detail.hpp"
#include "percreach/errors.hpp"

namespace percreach {

using detail::Overloaded;

FailureSpec::FailureSpec(Model model) : model_(std::move(model)) {
  std::visit(Overloaded{[&](const SlabKeepout& s) {
                          if (!(s.magnitude > 0.0)) throw ConfigError("slab magnitude must be > 0");
                        },
                        [&](const CircularObstacles& c) {
                          if (c.centers.empty() || c.centers.size() != c.radii.size()) {
                            throw ConfigError("obstacles need one radius per center");
                          }
                          for (double r : c.radii) {
                            if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("obstacle radius must be >= 0");
                          }
                          if (c.dim_x == c.dim_y) throw ConfigError("obstacle plane dims must differ");
                        },
                        [&](const ImportedField& f) {
                          // Largest one-dim difference quotient per axis, combined in 2-norm.
                          const Grid& g = f.field.grid();
                          double sum = 0.0;
                          for (std::size_t d = 0; d < g.dims(); ++d) {
                            double m = 0.0;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              const UpwindGradient gr = gradient_upwind(f.field, i);
                              m = std::max({m, std::abs(gr.left[d]), std::abs(gr.right[d])});
                            }
                            sum += m * m;
                          }
                          lipschitz_ = std::sqrt(sum);
                        }},
             model_);
}

double FailureSpec::evaluate(const SmallVec& x) const {
  return std::visit(Overloaded{[&](const SlabKeepout& s) { return s.magnitude - std::abs(x[s.dim]); },
                               [&](const CircularObstacles& c) {
                                 double best = std::numeric_limits<double>::infinity();
                                 for (std::size_t i = 0; i < c.centers.size(); ++i) {
                                   const double dx = x[c.dim_x] - c.centers[i][0];
                                   const double dy = x[c.dim_y] - c.centers[i][1];
                                   best = std::min(best, std::hypot(dx, dy) - c.radii[i]);
                                 }
                                 return best;
                               },
                               [&](const ImportedField& f) { return interpolate(f.field, x); }},
                    model_);
}

ScalarField FailureSpec::sample(const Grid& grid) const {
  if (const auto* f = std::get_if<ImportedField>(&model_)) {
    if (!(f->field.grid() == grid)) throw ConfigError("imported failure field grid differs from the solver grid");
    return f->field;
  }
  for (std::size_t d : relevant_dims(grid.dims())) {
    if (d >= grid.dims()) throw ConfigError("failure function dim out of range");
  }
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = evaluate(grid.point(i));
  return ScalarField(grid, std::move(v));
}

double FailureSpec::lipschitz() const { return lipschitz_; }

std::vector<std::size_t> FailureSpec::relevant_dims(std::size_t state_dims) const {
  return std::visit(Overloaded{[](const SlabKeepout& s) { return std::vector<std::size_t>{s.dim}; },
                               [](const CircularObstacles& c) { return std::vector<std::size_t>{c.dim_x, c.dim_y}; },
                               [&](const ImportedField&) {
                                 std::vector<std::size_t> all(state_dims);
                                 for (std::size_t i = 0; i < state_dims; ++i) all[i] = i;
                                 return all;
                               }},
                    model_);
}

double FailureSpec::tolerance(const Grid& grid) const {
  double h = 0.0;
  for (std::size_t d : relevant_dims(grid.dims())) h = std::max(h, grid.spacing(d));
  return 2.0 * lipschitz() * h;
}

}  // namespace percreach
