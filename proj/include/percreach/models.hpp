#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "percreach/grid.hpp"
#include "percreach/small_vec.hpp"

namespace percreach {

// Closed axis-aligned box. A zero-dimensional box stands for "no input".
struct Box {
  SmallVec lo;
  SmallVec hi;

  std::size_t dims() const { return lo.size(); }
  bool empty() const { return lo.empty(); }
  bool contains(const SmallVec& v, double slack = 0.0) const;
  // Symmetric box [-half, half].
  static Box symmetric(const SmallVec& half);
};

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

// x' = (v sin(theta), v cos(theta), u) over state (px, py, theta).
struct Dubins3D {
  double speed = 1.0;
};

// x' = A x + B u + E d.
struct LinearDynamics {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  Eigen::MatrixXd e;
};

// Every built-in system is affine in both control and disturbance:
//   f(x, u, d) = drift(x) + G(x) u + E(x) d
// The Hamiltonian code relies on this split.
class Dynamics {
 public:
  static Dynamics dubins3d(double speed);
  static Dynamics linear(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd e = {},
                         Box disturbance = {});

  std::size_t state_dims() const { return state_dims_; }
  std::size_t control_dims() const { return control_dims_; }
  std::size_t disturbance_dims() const { return disturbance_.dims(); }
  const Box& disturbance() const { return disturbance_; }
  bool control_affine() const { return true; }
  const std::variant<Dubins3D, LinearDynamics>& model() const { return model_; }

  // Throws ConfigError on dimension mismatch.
  SmallVec evaluate(const SmallVec& x, const SmallVec& u, const SmallVec& d) const;

  SmallVec drift(const SmallVec& x) const;
  // G(x)^T p: how the costate weights each control channel.
  SmallVec control_coefficients(const SmallVec& x, const SmallVec& p) const;
  // E^T p for the disturbance channels (empty when there is no disturbance).
  SmallVec disturbance_coefficients(const SmallVec& x, const SmallVec& p) const;
  // min over the disturbance box of p . E d, plus the minimizing d.
  double min_disturbance_term(const SmallVec& x, const SmallVec& p, SmallVec* d_star = nullptr) const;

 private:
  std::variant<Dubins3D, LinearDynamics> model_;
  Box disturbance_;
  std::size_t state_dims_ = 0, control_dims_ = 0;
};

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

// u = tan(a * x[position_dim] + b * x[heading_dim]), gains a, b <= 0.
struct TanProportional {
  double a = 0.0;
  double b = 0.0;
  std::size_t position_dim = 0;
  std::size_t heading_dim = 2;
};

// Nearest-node lookup table over the state (optionally with time appended as
// the last grid dim). table holds control_dims values per node.
struct Tabulated {
  Grid grid;
  std::size_t control_dims = 1;
  std::vector<double> table;
  SmallVec control_lo;
  SmallVec control_hi;
};

enum class Activation : std::uint8_t { kNone = 0, kRelu = 1, kTanh = 2 };

struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Activation activation = Activation::kNone;
};

struct Mlp {
  std::vector<DenseLayer> layers;
};

// u = K x + k0.
struct LinearFeedback {
  Eigen::MatrixXd gain;
  Eigen::VectorXd offset;
};

struct ControlEval {
  SmallVec u;
  // The tan argument left its domain and was clamped.
  bool saturated = false;
};

inline constexpr double kTanMargin = 1e-6;

class Controller {
 public:
  using Model = std::variant<TanProportional, Tabulated, Mlp, LinearFeedback>;

  // Validates the arm's invariants against the state dimension; throws
  // ConfigError.
  Controller(Model model, std::size_t state_dims);

  const Model& model() const { return model_; }
  std::size_t control_dims() const { return control_dims_; }
  std::size_t state_dims() const { return state_dims_; }
  // t is only read by tabulated controllers with a time axis.
  ControlEval evaluate(const SmallVec& estimate, double t = 0.0) const;

 private:
  Model model_;
  std::size_t state_dims_ = 0;
  std::size_t control_dims_ = 0;
};

// Clamps a tan argument into (-pi/2 + margin, pi/2 - margin).
double clamp_tan_argument(double arg, bool* saturated = nullptr);

// Nearest-node lookup; idempotent at nodes.
SmallVec tabulated_lookup(const Tabulated& t, const SmallVec& estimate, double time = 0.0);
std::size_t tabulated_cell(const Tabulated& t, const SmallVec& estimate, double time = 0.0);

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input);

// MLP weights: u32 layer count, then per layer u32 rows, u32 cols,
// f64 weight[rows*cols] row-major, f64 bias[rows], u8 activation.
void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);
void save_mlp(const std::filesystem::path& path, const Mlp& net);
Mlp load_mlp(const std::filesystem::path& path);

// Table file "RVCT": magic, version u32, control_dims u32, grid header,
// control_lo f64[c], control_hi f64[c], table f64[nodes*c].
void save_table(const std::filesystem::path& path, const Tabulated& table);
Tabulated load_table(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Perceptual error
// ---------------------------------------------------------------------------

class ErrorBound {
 public:
  enum class Mode { kStatic, kLinearGrowth };

  static ErrorBound none(std::size_t dims) { return static_box(SmallVec(dims, 0.0)); }
  static ErrorBound static_box(SmallVec half_widths);
  static ErrorBound linear_growth(SmallVec rates);

  Mode mode() const { return mode_; }
  std::size_t dims() const { return values_.size(); }
  bool time_varying() const { return mode_ == Mode::kLinearGrowth; }
  // Static half-widths, or growth rates in units per second.
  const SmallVec& values() const { return values_; }
  SmallVec half_widths(double dark_elapsed) const;

 private:
  Mode mode_ = Mode::kStatic;
  SmallVec values_;
};

// ---------------------------------------------------------------------------
// Closed loop h(x, d, e) = f(x, pi(x + e), d)
// ---------------------------------------------------------------------------

struct ClosedLoopModel {
  Dynamics dynamics;
  Controller controller;
  ErrorBound error;
  // State dims holding angles; the estimate is wrapped into [-pi, pi) on
  // these before the controller reads it.
  std::vector<std::size_t> angle_dims;

  SmallVec estimate(const SmallVec& x, const SmallVec& e) const;
  ControlEval control(const SmallVec& x, const SmallVec& e, double t = 0.0) const;
};

double wrap_angle(double a);

// Throws ConfigError on dims mismatch.
SmallVec eval_dynamics(const Dynamics& dyn, const SmallVec& x, const SmallVec& u, const SmallVec& d);
ControlEval eval_controller(const Controller& ctrl, const SmallVec& estimate, double t = 0.0);
// Throws ArgumentError if e leaves the error box at dark_elapsed or d leaves
// the disturbance box.
SmallVec eval_closed_loop(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& d,
                          const SmallVec& e, double dark_elapsed = 0.0, bool* saturated = nullptr);

}  // namespace percreach
