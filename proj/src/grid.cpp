#include "percreach/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "percreach/errors.hpp"

namespace percreach {

namespace {

// Fractional node positions this close to an integer are treated as lying on
// the node, so interpolation at nodes returns the stored value bit-exactly.
constexpr double kSnap = 1e-12;
constexpr double kClampSlack = 1e-9;

}  // namespace

Grid::Grid(std::vector<double> lo, std::vector<double> hi, std::vector<std::size_t> shape,
           std::vector<bool> periodic)
    : lo_(std::move(lo)), hi_(std::move(hi)), shape_(std::move(shape)), periodic_(std::move(periodic)) {
  const std::size_t n = lo_.size();
  if (n == 0 || n > kMaxDims) {
    throw ConfigError("grid must have between 1 and " + std::to_string(kMaxDims) + " dims");
  }
  if (hi_.size() != n || shape_.size() != n || periodic_.size() != n) {
    throw ConfigError("grid lo/hi/shape/periodic lengths disagree");
  }
  spacing_.resize(n);
  strides_.resize(n);
  for (std::size_t d = 0; d < n; ++d) {
    if (!(std::isfinite(lo_[d]) && std::isfinite(hi_[d]) && lo_[d] < hi_[d])) {
      throw ConfigError("grid dim " + std::to_string(d) + ": need finite lo < hi");
    }
    if (shape_[d] < 3) {
      throw ConfigError("grid dim " + std::to_string(d) + ": shape must be >= 3");
    }
    const double cells = periodic_[d] ? static_cast<double>(shape_[d])
                                      : static_cast<double>(shape_[d] - 1);
    spacing_[d] = (hi_[d] - lo_[d]) / cells;
  }
  std::size_t stride = 1;
  for (std::size_t d = n; d-- > 0;) {
    strides_[d] = stride;
    stride *= shape_[d];
  }
  size_ = stride;
}

std::vector<double> Grid::axis(std::size_t d) const {
  std::vector<double> out(shape_[d]);
  for (std::size_t k = 0; k < shape_[d]; ++k) out[k] = coordinate(d, k);
  return out;
}

SmallVec Grid::point(std::size_t flat) const {
  SmallVec x(dims());
  for (std::size_t d = 0; d < dims(); ++d) {
    const std::size_t k = (flat / strides_[d]) % shape_[d];
    x[d] = coordinate(d, k);
  }
  return x;
}

std::vector<std::size_t> Grid::unravel(std::size_t flat) const {
  std::vector<std::size_t> index(dims());
  for (std::size_t d = 0; d < dims(); ++d) index[d] = (flat / strides_[d]) % shape_[d];
  return index;
}

std::size_t Grid::ravel(std::span<const std::size_t> index) const {
  std::size_t flat = 0;
  for (std::size_t d = 0; d < dims(); ++d) flat += index[d] * strides_[d];
  return flat;
}

double Grid::wrap(std::size_t d, double x) const {
  if (!periodic_[d]) return x;
  const double p = period(d);
  double r = std::fmod(x - lo_[d], p);
  if (r < 0.0) r += p;
  if (r >= p) r = 0.0;
  return lo_[d] + r;
}

double Grid::cell_volume(std::size_t flat) const {
  double v = 1.0;
  for (std::size_t d = 0; d < dims(); ++d) {
    const std::size_t k = (flat / strides_[d]) % shape_[d];
    double w = spacing_[d];
    if (!periodic_[d] && (k == 0 || k + 1 == shape_[d])) w *= 0.5;
    v *= w;
  }
  return v;
}

double Grid::box_volume() const {
  double v = 1.0;
  for (std::size_t d = 0; d < dims(); ++d) v *= hi_[d] - lo_[d];
  return v;
}

std::size_t Grid::nearest_index(std::size_t d, double x) const {
  const auto n = static_cast<long long>(shape_[d]);
  const double pos = (wrap(d, x) - lo_[d]) / spacing_[d];
  auto k = static_cast<long long>(std::ceil(pos - 0.5));
  if (periodic_[d]) {
    k %= n;
    if (k < 0) k += n;
  } else {
    k = std::clamp(k, 0LL, n - 1);
  }
  return static_cast<std::size_t>(k);
}

ScalarField::ScalarField(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw ArgumentError("field has " + std::to_string(values_.size()) + " values, grid has " +
                        std::to_string(grid_.size()) + " nodes");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ArgumentError("field value at node " + std::to_string(i) + " is not finite");
    }
  }
}

Interpolated interpolate_checked(const Grid& grid, std::span<const double> values,
                                 const SmallVec& x) {
  const std::size_t n = grid.dims();
  if (x.size() != n) throw ArgumentError("query dimension does not match grid");

  std::array<std::size_t, kMaxDims> i0{}, i1{};
  std::array<double, kMaxDims> frac{};
  bool clamped = false;
  for (std::size_t d = 0; d < n; ++d) {
    const auto shape = static_cast<double>(grid.shape(d));
    double pos = (grid.wrap(d, x[d]) - grid.lo(d)) / grid.spacing(d);
    if (!grid.periodic(d)) {
      const double top = shape - 1.0;
      if (pos < -kClampSlack || pos > top + kClampSlack) clamped = true;
      pos = std::clamp(pos, 0.0, top);
    }
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < kSnap) pos = nearest;
    double base = std::floor(pos);
    double f = pos - base;
    if (!grid.periodic(d) && base >= shape - 1.0) {
      base = shape - 2.0;
      f = 1.0;
    }
    auto k = static_cast<std::size_t>(base);
    if (grid.periodic(d) && k >= grid.shape(d)) k -= grid.shape(d);
    i0[d] = k;
    i1[d] = k + 1 == grid.shape(d) ? 0 : k + 1;  // only reachable for periodic dims
    frac[d] = f;
  }

  double acc = 0.0;
  const std::size_t corners = std::size_t{1} << n;
  for (std::size_t c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t d = 0; d < n; ++d) {
      const bool upper = (c >> d) & 1U;
      w *= upper ? frac[d] : 1.0 - frac[d];
      flat += (upper ? i1[d] : i0[d]) * grid.stride(d);
    }
    if (w != 0.0) acc += w * values[flat];
  }
  return {acc, clamped};
}

UpwindGradient gradient_upwind(const Grid& grid, std::span<const double> values,
                               std::size_t flat) {
  const std::size_t n = grid.dims();
  UpwindGradient g{SmallVec(n), SmallVec(n)};
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t s = grid.stride(d);
    const std::size_t m = grid.shape(d);
    const std::size_t k = (flat / s) % m;
    const double h = grid.spacing(d);
    const double v = values[flat];
    bool has_left = true, has_right = true;
    std::size_t left = 0, right = 0;
    if (k > 0) {
      left = flat - s;
    } else if (grid.periodic(d)) {
      left = flat + (m - 1) * s;
    } else {
      has_left = false;
    }
    if (k + 1 < m) {
      right = flat + s;
    } else if (grid.periodic(d)) {
      right = flat - (m - 1) * s;
    } else {
      has_right = false;
    }
    double dl = has_left ? (v - values[left]) / h : 0.0;
    double dr = has_right ? (values[right] - v) / h : 0.0;
    if (!has_left) dl = dr;
    if (!has_right) dr = dl;
    g.left[d] = dl;
    g.right[d] = dr;
  }
  return g;
}

}  // namespace percreach
