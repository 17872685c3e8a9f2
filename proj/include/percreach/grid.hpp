#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "percreach/small_vec.hpp"

namespace percreach {

// Rectilinear grid over a box. Periodic dims exclude their upper endpoint, so
// the node k = shape maps back onto k = 0.
class Grid {
 public:
  Grid() = default;
  // Throws ConfigError when lo >= hi, shape < 3, or the dims disagree.
  Grid(std::vector<double> lo, std::vector<double> hi, std::vector<std::size_t> shape,
       std::vector<bool> periodic);

  std::size_t dims() const { return lo_.size(); }
  std::size_t size() const { return size_; }
  std::size_t shape(std::size_t d) const { return shape_[d]; }
  std::size_t stride(std::size_t d) const { return strides_[d]; }
  double lo(std::size_t d) const { return lo_[d]; }
  double hi(std::size_t d) const { return hi_[d]; }
  double spacing(std::size_t d) const { return spacing_[d]; }
  bool periodic(std::size_t d) const { return periodic_[d]; }
  double period(std::size_t d) const { return hi_[d] - lo_[d]; }

  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<bool>& periodic() const { return periodic_; }

  // The last node of a non-periodic dim is hi exactly.
  double coordinate(std::size_t d, std::size_t k) const {
    if (!periodic_[d] && k + 1 == shape_[d]) return hi_[d];
    return lo_[d] + static_cast<double>(k) * spacing_[d];
  }
  // Node coordinates along one dim.
  std::vector<double> axis(std::size_t d) const;

  SmallVec point(std::size_t flat) const;
  std::vector<std::size_t> unravel(std::size_t flat) const;
  std::size_t ravel(std::span<const std::size_t> index) const;

  // Maps x into [lo, hi) for a periodic dim; identity otherwise.
  double wrap(std::size_t d, double x) const;

  // Volume of the dual cell around a node. Non-periodic boundary nodes own a
  // half cell, so the volumes sum to the box volume.
  double cell_volume(std::size_t flat) const;
  double box_volume() const;

  // Index of the nearest node along one dim. Ties round toward the lower
  // index; positions outside a non-periodic range clamp to the end nodes.
  std::size_t nearest_index(std::size_t d, double x) const;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.shape_ == b.shape_ && a.periodic_ == b.periodic_;
  }

 private:
  std::vector<double> lo_, hi_, spacing_;
  std::vector<std::size_t> shape_, strides_;
  std::vector<bool> periodic_;
  std::size_t size_ = 0;
};

// One real per grid node, row-major. Immutable after construction.
class ScalarField {
 public:
  ScalarField() = default;
  // Throws ArgumentError on size mismatch or non-finite entries.
  ScalarField(Grid grid, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

  friend bool operator==(const ScalarField& a, const ScalarField& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_;
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

struct Interpolated {
  double value = 0.0;
  // True when a non-periodic coordinate lay outside the grid by more than
  // 1e-9 spacing and had to be clamped.
  bool clamped = false;
};

Interpolated interpolate_checked(const Grid& grid, std::span<const double> values,
                                 const SmallVec& x);
inline Interpolated interpolate_checked(const ScalarField& field, const SmallVec& x) {
  return interpolate_checked(field.grid(), field.values(), x);
}
inline double interpolate(const ScalarField& field, const SmallVec& x) {
  return interpolate_checked(field, x).value;
}

struct UpwindGradient {
  SmallVec left;
  SmallVec right;
};

// One-sided first differences at a node. Non-periodic boundaries reuse the
// outermost interior difference on the missing side.
UpwindGradient gradient_upwind(const Grid& grid, std::span<const double> values,
                               std::size_t flat);
inline UpwindGradient gradient_upwind(const ScalarField& field, std::size_t flat) {
  return gradient_upwind(field.grid(), field.values(), flat);
}

}  // namespace percreach
