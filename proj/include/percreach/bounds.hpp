#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <vector>

#include "percreach/grid.hpp"
#include "percreach/models.hpp"

namespace percreach {

// Interval carrier for bound propagation: [center - radius, center + radius].
struct IntervalBox {
  Eigen::VectorXd center;
  Eigen::VectorXd radius;

  static IntervalBox from_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  Eigen::VectorXd lower() const { return center - radius; }
  Eigen::VectorXd upper() const { return center + radius; }
};

struct ControlInterval {
  SmallVec lower;
  SmallVec upper;
};

// Table cells whose nearest-node region meets the estimate box
// [x - half, x + half], with the element-wise hull of their entries.
struct Enumeration {
  std::vector<std::size_t> cells;
  ControlInterval hull;
};

Enumeration enumerate_table(const Tabulated& table, const SmallVec& x, const SmallVec& half,
                            double time = 0.0);
// Exact element-wise control range of a tabulated controller under the box.
ControlInterval bounds_by_enumeration(const Tabulated& table, const SmallVec& x, const SmallVec& half,
                                      double time = 0.0);

// Interval bound propagation. Sound superset of the network's output range
// over the box; exact for networks without activations.
ControlInterval bounds_by_ibp(const Mlp& net, const IntervalBox& box);
// IBP over x + [-half, half] after wrapping the angle dims into [-pi, pi).
// A box that straddles the seam is split and the pieces' hulls are merged.
ControlInterval bounds_by_ibp_wrapped(const Mlp& net, const SmallVec& x, const SmallVec& half,
                                      const std::vector<std::size_t>& angle_dims);

// Uniform dark-time axis 0, dt, ..., t_max.
struct DarkTimeAxis {
  double t_max = 0.0;
  std::size_t steps = 0;  // sample count, >= 3
};

// Per-node control hyperrectangles. With a dark-time axis the grid carries it
// as its last (non-periodic) dim, so node layout is state-major, time-minor.
class ControlBoundsField {
 public:
  ControlBoundsField() = default;
  // Throws ArgumentError when lower > upper anywhere (message names the cell)
  // or the array sizes are wrong.
  ControlBoundsField(Grid grid, bool has_dark_time, std::size_t control_dims,
                     std::vector<double> lower, std::vector<double> upper);

  const Grid& grid() const { return grid_; }
  bool has_dark_time() const { return has_dark_time_; }
  std::size_t control_dims() const { return control_dims_; }
  std::size_t state_dims() const { return grid_.dims() - (has_dark_time_ ? 1 : 0); }
  std::size_t dark_samples() const { return has_dark_time_ ? grid_.shape(grid_.dims() - 1) : 1; }
  double dark_time(std::size_t q) const;
  // Sample at or above t' (rounded up so the box never shrinks).
  std::size_t dark_index_for(double dark_elapsed) const;
  Grid state_grid() const;

  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  ControlInterval at(std::size_t state_flat, std::size_t dark_index = 0) const;
  // Largest |bound| per control channel over every cell.
  SmallVec max_magnitude() const;

  friend bool operator==(const ControlBoundsField& a, const ControlBoundsField& b) {
    return a.grid_ == b.grid_ && a.has_dark_time_ == b.has_dark_time_ &&
           a.control_dims_ == b.control_dims_ && a.lower_ == b.lower_ && a.upper_ == b.upper_;
  }

 private:
  Grid grid_;
  bool has_dark_time_ = false;
  std::size_t control_dims_ = 0;
  std::vector<double> lower_, upper_;
};

// Computes bounds at every state node (and dark-time sample) with the error
// box centered at the node. Throws ConfigError for controller arms that have
// no bounding route (use an exact Hamiltonian for those).
ControlBoundsField build_bounds_field(const ClosedLoopModel& model, const Grid& state_grid,
                                      std::optional<DarkTimeAxis> dark_time = std::nullopt);

// "RVCB": magic, version u32, control_dims u32, has_dark_time u8, grid header
// (dims, shape, lo, hi, periodic), lower f64[nodes*c], upper f64[nodes*c].
void export_bounds(const ControlBoundsField& field, const std::filesystem::path& path);
ControlBoundsField import_bounds(const std::filesystem::path& path);
void write_bounds(std::ostream& os, const ControlBoundsField& field);
ControlBoundsField read_bounds(std::istream& is);

}  // namespace percreach
