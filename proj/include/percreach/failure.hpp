#pragma once

#include <array>
#include <variant>
#include <vector>

#include "percreach/grid.hpp"

namespace percreach {

// l(x) = magnitude - |x[dim]|; fails once |x[dim]| >= magnitude.
struct SlabKeepout {
  std::size_t dim = 0;
  double magnitude = 0.0;
};

// Signed distance to a union of discs in the (dim_x, dim_y) plane:
// l(x) = min_i (|p - c_i| - r_i).
struct CircularObstacles {
  std::vector<std::array<double, 2>> centers;
  std::vector<double> radii;
  std::size_t dim_x = 0;
  std::size_t dim_y = 1;
};

// l sampled on a grid; evaluated off-node by multilinear interpolation.
struct ImportedField {
  ScalarField field;
};

class FailureSpec {
 public:
  using Model = std::variant<SlabKeepout, CircularObstacles, ImportedField>;

  // Throws ConfigError on negative radii, empty obstacle lists or a
  // non-positive slab magnitude.
  explicit FailureSpec(Model model);

  const Model& model() const { return model_; }
  double evaluate(const SmallVec& x) const;
  // l at every node of grid. Throws ConfigError when an imported field's grid
  // differs from `grid` or a dim index is out of range.
  ScalarField sample(const Grid& grid) const;
  // Lipschitz bound of l (Euclidean norm of the gradient).
  double lipschitz() const;
  // State dims l depends on.
  std::vector<std::size_t> relevant_dims(std::size_t state_dims) const;
  // Grid tolerance used by the acceptance checks: 2 x Lipschitz x the widest
  // spacing among the relevant dims.
  double tolerance(const Grid& grid) const;

 private:
  Model model_;
  double lipschitz_ = 1.0;
};

}  // namespace percreach
