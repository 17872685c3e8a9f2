#include "percreach/models.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "detail.hpp"
#include "percreach/binary_io.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"

namespace percreach {

namespace {

using detail::from_eigen;
using detail::Overloaded;
using detail::to_eigen;

constexpr std::string_view kTableMagic = "RVCT";

void require_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ConfigError(std::string(what) + " has " + std::to_string(got) + " entries, expected " +
                      std::to_string(want));
  }
}

}  // namespace

bool Box::contains(const SmallVec& v, double slack) const {
  if (v.size() != dims()) return false;
  for (std::size_t i = 0; i < dims(); ++i) {
    if (v[i] < lo[i] - slack || v[i] > hi[i] + slack) return false;
  }
  return true;
}

Box Box::symmetric(const SmallVec& half) {
  SmallVec lo(half.size());
  for (std::size_t i = 0; i < half.size(); ++i) lo[i] = -half[i];
  return {lo, half};
}

// ---------------------------------------------------------------------------

Dynamics Dynamics::dubins3d(double speed) {
  if (!std::isfinite(speed)) throw ConfigError("dubins speed must be finite");
  Dynamics d;
  d.model_ = Dubins3D{speed};
  d.state_dims_ = 3;
  d.control_dims_ = 1;
  return d;
}

Dynamics Dynamics::linear(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd e, Box disturbance) {
  const auto n = a.rows();
  if (n == 0 || a.cols() != n) throw ConfigError("linear dynamics: A must be square and non-empty");
  if (b.rows() != n || b.cols() == 0) throw ConfigError("linear dynamics: B must have A's row count");
  if (e.size() == 0) e.resize(n, 0);
  if (e.rows() != n) throw ConfigError("linear dynamics: E must have A's row count");
  if (static_cast<std::size_t>(e.cols()) != disturbance.dims()) {
    throw ConfigError("linear dynamics: E columns must match the disturbance box dims");
  }
  for (std::size_t i = 0; i < disturbance.dims(); ++i) {
    if (!(disturbance.lo[i] <= disturbance.hi[i])) throw ConfigError("disturbance box has lo > hi");
  }
  Dynamics d;
  d.state_dims_ = static_cast<std::size_t>(n);
  d.control_dims_ = static_cast<std::size_t>(b.cols());
  d.model_ = LinearDynamics{std::move(a), std::move(b), std::move(e)};
  d.disturbance_ = std::move(disturbance);
  return d;
}

SmallVec Dynamics::evaluate(const SmallVec& x, const SmallVec& u, const SmallVec& d) const {
  require_dims(x.size(), state_dims_, "state");
  require_dims(u.size(), control_dims_, "control");
  require_dims(d.size(), disturbance_dims(), "disturbance");
  SmallVec f = drift(x);
  const SmallVec gu = std::visit(
      Overloaded{[&](const Dubins3D&) { return SmallVec{0.0, 0.0, u[0]}; },
                 [&](const LinearDynamics& m) {
                   SmallVec out = from_eigen(m.b * to_eigen(u));
                   if (!d.empty()) out = out + from_eigen(m.e * to_eigen(d));
                   return out;
                 }},
      model_);
  return f + gu;
}

SmallVec Dynamics::drift(const SmallVec& x) const {
  return std::visit(Overloaded{[&](const Dubins3D& m) {
                                 return SmallVec{m.speed * std::sin(x[2]), m.speed * std::cos(x[2]), 0.0};
                               },
                               [&](const LinearDynamics& m) { return from_eigen(m.a * to_eigen(x)); }},
                    model_);
}

SmallVec Dynamics::control_coefficients(const SmallVec& /*x*/, const SmallVec& p) const {
  return std::visit(Overloaded{[&](const Dubins3D&) { return SmallVec{p[2]}; },
                               [&](const LinearDynamics& m) {
                                 return from_eigen(m.b.transpose() * to_eigen(p));
                               }},
                    model_);
}

SmallVec Dynamics::disturbance_coefficients(const SmallVec& /*x*/, const SmallVec& p) const {
  if (disturbance_.empty()) return {};
  const auto& m = std::get<LinearDynamics>(model_);
  return from_eigen(m.e.transpose() * to_eigen(p));
}

double Dynamics::min_disturbance_term(const SmallVec& x, const SmallVec& p, SmallVec* d_star) const {
  if (disturbance_.empty()) {
    if (d_star) *d_star = SmallVec{};
    return 0.0;
  }
  const SmallVec g = disturbance_coefficients(x, p);
  SmallVec d(g.size());
  double total = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    // Ties (g == 0) pick the lower corner.
    d[k] = g[k] > 0.0 ? disturbance_.lo[k] : (g[k] < 0.0 ? disturbance_.hi[k] : disturbance_.lo[k]);
    total += g[k] * d[k];
  }
  if (d_star) *d_star = d;
  return total;
}

// ---------------------------------------------------------------------------

double clamp_tan_argument(double arg, bool* saturated) {
  constexpr double limit = std::numbers::pi / 2.0 - kTanMargin;
  if (arg > limit || arg < -limit) {
    if (saturated) *saturated = true;
    return std::clamp(arg, -limit, limit);
  }
  return arg;
}

std::size_t tabulated_cell(const Tabulated& t, const SmallVec& estimate, double time) {
  std::size_t flat = 0;
  const std::size_t n = t.grid.dims();
  for (std::size_t d = 0; d < n; ++d) {
    const double coord = d < estimate.size() ? estimate[d] : time;
    flat += t.grid.nearest_index(d, coord) * t.grid.stride(d);
  }
  return flat;
}

SmallVec tabulated_lookup(const Tabulated& t, const SmallVec& estimate, double time) {
  const std::size_t cell = tabulated_cell(t, estimate, time);
  return SmallVec(std::span<const double>(t.table).subspan(cell * t.control_dims, t.control_dims));
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input) {
  Eigen::VectorXd z = input;
  for (const auto& layer : net.layers) {
    z = layer.weight * z + layer.bias;
    switch (layer.activation) {
      case Activation::kNone:
        break;
      case Activation::kRelu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::kTanh:
        z = z.array().tanh().matrix();
        break;
    }
  }
  return z;
}

Controller::Controller(Model model, std::size_t state_dims) : model_(std::move(model)), state_dims_(state_dims) {
  std::visit(
      Overloaded{
          [&](const TanProportional& c) {
            if (!(c.a <= 0.0 && c.b <= 0.0)) throw ConfigError("tan-proportional gains must satisfy a <= 0, b <= 0");
            if (c.position_dim >= state_dims || c.heading_dim >= state_dims) {
              throw ConfigError("tan-proportional state index out of range");
            }
            control_dims_ = 1;
          },
          [&](const Tabulated& c) {
            if (c.grid.dims() != state_dims && c.grid.dims() != state_dims + 1) {
              throw ConfigError("table grid must span the state (optionally plus time)");
            }
            if (c.control_dims == 0 || c.table.size() != c.grid.size() * c.control_dims) {
              throw ConfigError("table length does not match grid size x control dims");
            }
            require_dims(c.control_lo.size(), c.control_dims, "table control_lo");
            require_dims(c.control_hi.size(), c.control_dims, "table control_hi");
            for (std::size_t i = 0; i < c.table.size(); ++i) {
              const std::size_t k = i % c.control_dims;
              const double v = c.table[i];
              if (!std::isfinite(v) || v < c.control_lo[k] || v > c.control_hi[k]) {
                throw ConfigError("table entry " + std::to_string(i / c.control_dims) +
                                  " lies outside the declared control box");
              }
            }
            control_dims_ = c.control_dims;
          },
          [&](const Mlp& c) {
            if (c.layers.empty()) throw ConfigError("mlp has no layers");
            auto width = static_cast<Eigen::Index>(state_dims);
            for (std::size_t i = 0; i < c.layers.size(); ++i) {
              const auto& l = c.layers[i];
              if (l.weight.cols() != width || l.bias.size() != l.weight.rows() || l.weight.rows() == 0) {
                throw ConfigError("mlp layer " + std::to_string(i) + " dimensions do not chain");
              }
              width = l.weight.rows();
            }
            control_dims_ = static_cast<std::size_t>(width);
          },
          [&](const LinearFeedback& c) {
            if (c.gain.cols() != static_cast<Eigen::Index>(state_dims) || c.gain.rows() == 0) {
              throw ConfigError("linear feedback gain must have state-dim columns");
            }
            if (c.offset.size() != c.gain.rows()) throw ConfigError("linear feedback offset size mismatch");
            control_dims_ = static_cast<std::size_t>(c.gain.rows());
          }},
      model_);
  if (control_dims_ > kMaxDims) throw ConfigError("too many control dims");
}

ControlEval Controller::evaluate(const SmallVec& x, double t) const {
  require_dims(x.size(), state_dims_, "estimate");
  return std::visit(
      Overloaded{[&](const TanProportional& c) {
                   ControlEval out;
                   const double arg = clamp_tan_argument(c.a * x[c.position_dim] + c.b * x[c.heading_dim],
                                                         &out.saturated);
                   out.u = SmallVec{std::tan(arg)};
                   return out;
                 },
                 [&](const Tabulated& c) { return ControlEval{tabulated_lookup(c, x, t), false}; },
                 [&](const Mlp& c) { return ControlEval{from_eigen(mlp_forward(c, to_eigen(x))), false}; },
                 [&](const LinearFeedback& c) {
                   return ControlEval{from_eigen(c.gain * to_eigen(x) + c.offset), false};
                 }},
      model_);
}

// ---------------------------------------------------------------------------

void write_mlp(std::ostream& os, const Mlp& net) {
  io::Writer w(os);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    w.u32(static_cast<std::uint32_t>(l.weight.rows()));
    w.u32(static_cast<std::uint32_t>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.f64(l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f64(l.bias[r]);
    w.u8(static_cast<std::uint8_t>(l.activation));
  }
}

Mlp read_mlp(std::istream& is) {
  io::Reader r(is);
  Mlp net;
  const auto count = r.u32("layer count");
  if (count == 0 || count > 1024) throw FormatError("implausible layer count", 0);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto rows = r.u32("rows");
    const auto cols = r.u32("cols");
    if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536) throw FormatError("implausible layer shape", at);
    DenseLayer l;
    l.weight.resize(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a) {
      for (std::uint32_t b = 0; b < cols; ++b) l.weight(a, b) = r.f64("weight");
    }
    l.bias.resize(rows);
    for (std::uint32_t a = 0; a < rows; ++a) l.bias[a] = r.f64("bias");
    const std::size_t tag_at = r.offset();
    const auto tag = r.u8("activation");
    if (tag > 2) throw FormatError("unknown activation tag " + std::to_string(tag), tag_at);
    l.activation = static_cast<Activation>(tag);
    net.layers.push_back(std::move(l));
  }
  r.expect_end();
  return net;
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path.string() + " for writing");
  write_mlp(os, net);
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open mlp weights " + path.string());
  return read_mlp(is);
}

void save_table(const std::filesystem::path& path, const Tabulated& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path.string() + " for writing");
  io::Writer w(os);
  w.bytes(kTableMagic);
  w.u32(kFieldFormatVersion);
  w.u32(static_cast<std::uint32_t>(t.control_dims));
  write_grid_header(w, t.grid);
  for (double v : t.control_lo) w.f64(v);
  for (double v : t.control_hi) w.f64(v);
  w.f64s(t.table);
}

Tabulated load_table(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open table " + path.string());
  io::Reader r(is);
  if (r.bytes(4, "magic") != kTableMagic) throw FormatError("bad table magic", 0);
  if (r.u32("version") != kFieldFormatVersion) throw FormatError("unsupported table version", 4);
  Tabulated t;
  const std::size_t cd_at = r.offset();
  t.control_dims = r.u32("control dims");
  if (t.control_dims == 0 || t.control_dims > kMaxDims) throw FormatError("bad control dims", cd_at);
  const auto dims = r.u32("dims");
  t.grid = read_grid_header(r, dims);
  t.control_lo = SmallVec(t.control_dims);
  t.control_hi = SmallVec(t.control_dims);
  for (auto& v : t.control_lo) v = r.f64("control_lo");
  for (auto& v : t.control_hi) v = r.f64("control_hi");
  t.table = r.f64s(t.grid.size() * t.control_dims, "table");
  r.expect_end();
  return t;
}

// ---------------------------------------------------------------------------

ErrorBound ErrorBound::static_box(SmallVec half_widths) {
  for (double v : half_widths) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("error half-widths must be finite and >= 0");
  }
  ErrorBound e;
  e.mode_ = Mode::kStatic;
  e.values_ = half_widths;
  return e;
}

ErrorBound ErrorBound::linear_growth(SmallVec rates) {
  for (double v : rates) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("error growth rates must be finite and >= 0");
  }
  ErrorBound e;
  e.mode_ = Mode::kLinearGrowth;
  e.values_ = rates;
  return e;
}

SmallVec ErrorBound::half_widths(double dark_elapsed) const {
  if (mode_ == Mode::kStatic) return values_;
  const double t = std::max(dark_elapsed, 0.0);
  return t * values_;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r = 0.0;
  return r - std::numbers::pi;
}

SmallVec ClosedLoopModel::estimate(const SmallVec& x, const SmallVec& e) const {
  SmallVec xh = x + e;
  for (std::size_t d : angle_dims) xh[d] = wrap_angle(xh[d]);
  return xh;
}

ControlEval ClosedLoopModel::control(const SmallVec& x, const SmallVec& e, double t) const {
  return controller.evaluate(estimate(x, e), t);
}

SmallVec eval_dynamics(const Dynamics& dyn, const SmallVec& x, const SmallVec& u, const SmallVec& d) {
  return dyn.evaluate(x, u, d);
}

ControlEval eval_controller(const Controller& ctrl, const SmallVec& estimate, double t) {
  return ctrl.evaluate(estimate, t);
}

SmallVec eval_closed_loop(const ClosedLoopModel& model, const SmallVec& x, const SmallVec& d,
                          const SmallVec& e, double dark_elapsed, bool* saturated) {
  require_dims(e.size(), model.dynamics.state_dims(), "error");
  const SmallVec half = model.error.half_widths(dark_elapsed);
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (std::abs(e[i]) > half[i] * (1.0 + 1e-12) + 1e-15) {
      throw ArgumentError("error component " + std::to_string(i) + " lies outside the error box");
    }
  }
  if (!model.dynamics.disturbance().empty() && !model.dynamics.disturbance().contains(d, 1e-15)) {
    throw ArgumentError("disturbance lies outside the disturbance box");
  }
  const ControlEval u = model.control(x, e);
  if (saturated) *saturated = u.saturated;
  return model.dynamics.evaluate(x, u.u, d);
}

}  // namespace percreach
