#include "percreach/bounds.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "percreach/binary_io.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"
#include "percreach/parallel.hpp"

namespace percreach {

namespace {

constexpr std::string_view kBoundsMagic = "RVCB";

// Table indices along one dim whose nearest-node interval meets [c - r, c + r].
std::vector<std::size_t> index_range(const Grid& g, std::size_t d, double c, double r) {
  const auto n = static_cast<long long>(g.shape(d));
  std::vector<std::size_t> out;
  if (!g.periodic(d)) {
    const std::size_t a = g.nearest_index(d, c - r);
    const std::size_t b = g.nearest_index(d, c + r);
    for (std::size_t k = a; k <= b; ++k) out.push_back(k);
    return out;
  }
  if (2.0 * r >= g.period(d)) {
    for (long long k = 0; k < n; ++k) out.push_back(static_cast<std::size_t>(k));
    return out;
  }
  const double base = g.wrap(d, c) - g.lo(d);
  const auto a = static_cast<long long>(std::ceil((base - r) / g.spacing(d) - 0.5));
  const auto b = static_cast<long long>(std::ceil((base + r) / g.spacing(d) - 0.5));
  const long long count = std::min(b - a + 1, n);
  for (long long k = a; k < a + count; ++k) {
    long long w = k % n;
    if (w < 0) w += n;
    out.push_back(static_cast<std::size_t>(w));
  }
  return out;
}

ControlInterval empty_hull(std::size_t dims) {
  return {SmallVec(dims, std::numeric_limits<double>::infinity()),
          SmallVec(dims, -std::numeric_limits<double>::infinity())};
}

void merge(ControlInterval& into, const ControlInterval& other) {
  for (std::size_t k = 0; k < into.lower.size(); ++k) {
    into.lower[k] = std::min(into.lower[k], other.lower[k]);
    into.upper[k] = std::max(into.upper[k], other.upper[k]);
  }
}

}  // namespace

IntervalBox IntervalBox::from_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size() || ((hi - lo).array() < 0.0).any()) {
    throw ArgumentError("interval box needs lo <= hi element-wise");
  }
  return {0.5 * (lo + hi), 0.5 * (hi - lo)};
}

Enumeration enumerate_table(const Tabulated& table, const SmallVec& x, const SmallVec& half, double time) {
  const Grid& g = table.grid;
  const std::size_t n = g.dims();
  if (x.size() != half.size() || (x.size() != n && x.size() + 1 != n)) {
    throw ArgumentError("enumeration state/error dims do not match the table grid");
  }
  std::vector<std::vector<std::size_t>> ranges(n);
  for (std::size_t d = 0; d < n; ++d) {
    ranges[d] = d < x.size() ? index_range(g, d, x[d], half[d]) : std::vector<std::size_t>{g.nearest_index(d, time)};
  }

  Enumeration out;
  out.hull = empty_hull(table.control_dims);
  std::vector<std::size_t> pos(n, 0);
  while (true) {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < n; ++d) flat += ranges[d][pos[d]] * g.stride(d);
    out.cells.push_back(flat);
    for (std::size_t k = 0; k < table.control_dims; ++k) {
      const double v = table.table[flat * table.control_dims + k];
      out.hull.lower[k] = std::min(out.hull.lower[k], v);
      out.hull.upper[k] = std::max(out.hull.upper[k], v);
    }
    std::size_t d = n;
    while (d-- > 0) {
      if (++pos[d] < ranges[d].size()) break;
      pos[d] = 0;
    }
    if (d == static_cast<std::size_t>(-1)) break;
  }
  return out;
}

ControlInterval bounds_by_enumeration(const Tabulated& table, const SmallVec& x, const SmallVec& half,
                                      double time) {
  return enumerate_table(table, x, half, time).hull;
}

ControlInterval bounds_by_ibp(const Mlp& net, const IntervalBox& box) {
  Eigen::VectorXd c = box.center;
  Eigen::VectorXd r = box.radius;
  if ((r.array() < 0.0).any() || !r.allFinite()) throw ArgumentError("ibp radius must be finite and >= 0");
  // Runs of activation-free layers are composed into one affine map before
  // the interval passes through it; propagating them one by one would widen
  // the box at every layer.
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(c.size(), c.size());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(c.size());
  for (const auto& layer : net.layers) {
    if (layer.weight.cols() != w.rows()) throw ConfigError("ibp input does not match layer width");
    w = layer.weight * w;
    b = layer.weight * b + layer.bias;
    if (layer.activation == Activation::kNone) continue;
    if (layer.activation != Activation::kRelu && layer.activation != Activation::kTanh) {
      throw ConfigError("ibp supports only monotone activations");
    }
    c = w * c + b;
    r = w.cwiseAbs() * r;
    Eigen::ArrayXd lo = (c - r).array();
    Eigen::ArrayXd hi = (c + r).array();
    if (layer.activation == Activation::kRelu) {
      lo = lo.max(0.0);
      hi = hi.max(0.0);
    } else {
      lo = lo.tanh();
      hi = hi.tanh();
    }
    c = (0.5 * (lo + hi)).matrix();
    r = (0.5 * (hi - lo)).matrix();
    w = Eigen::MatrixXd::Identity(c.size(), c.size());
    b = Eigen::VectorXd::Zero(c.size());
  }
  c = w * c + b;
  r = w.cwiseAbs() * r;
  ControlInterval out{SmallVec(static_cast<std::size_t>(c.size())), SmallVec(static_cast<std::size_t>(c.size()))};
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    out.lower[static_cast<std::size_t>(i)] = c[i] - r[i];
    out.upper[static_cast<std::size_t>(i)] = c[i] + r[i];
  }
  return out;
}

ControlInterval bounds_by_ibp_wrapped(const Mlp& net, const SmallVec& x, const SmallVec& half,
                                      const std::vector<std::size_t>& angle_dims) {
  const std::size_t n = x.size();
  // Per dim: one or two [lo, hi] pieces.
  std::vector<std::vector<std::pair<double, double>>> pieces(n);
  for (std::size_t d = 0; d < n; ++d) {
    const bool angle = std::find(angle_dims.begin(), angle_dims.end(), d) != angle_dims.end();
    if (!angle) {
      pieces[d] = {{x[d] - half[d], x[d] + half[d]}};
      continue;
    }
    constexpr double pi = std::numbers::pi;
    if (2.0 * half[d] >= 2.0 * pi) {
      pieces[d] = {{-pi, pi}};
      continue;
    }
    const double c = wrap_angle(x[d]);
    const double lo = c - half[d];
    const double hi = c + half[d];
    if (lo < -pi) {
      pieces[d] = {{-pi, hi}, {lo + 2.0 * pi, pi}};
    } else if (hi >= pi) {
      pieces[d] = {{lo, pi}, {-pi, hi - 2.0 * pi}};
    } else {
      pieces[d] = {{lo, hi}};
    }
  }

  const auto out_dims = static_cast<std::size_t>(net.layers.back().weight.rows());
  ControlInterval hull = empty_hull(out_dims);
  std::vector<std::size_t> pos(n, 0);
  Eigen::VectorXd lo(static_cast<Eigen::Index>(n)), hi(static_cast<Eigen::Index>(n));
  while (true) {
    for (std::size_t d = 0; d < n; ++d) {
      lo[static_cast<Eigen::Index>(d)] = pieces[d][pos[d]].first;
      hi[static_cast<Eigen::Index>(d)] = pieces[d][pos[d]].second;
    }
    merge(hull, bounds_by_ibp(net, IntervalBox::from_bounds(lo, hi)));
    std::size_t d = n;
    while (d-- > 0) {
      if (++pos[d] < pieces[d].size()) break;
      pos[d] = 0;
    }
    if (d == static_cast<std::size_t>(-1)) break;
  }
  return hull;
}

// ---------------------------------------------------------------------------

ControlBoundsField::ControlBoundsField(Grid grid, bool has_dark_time, std::size_t control_dims,
                                       std::vector<double> lower, std::vector<double> upper)
    : grid_(std::move(grid)),
      has_dark_time_(has_dark_time),
      control_dims_(control_dims),
      lower_(std::move(lower)),
      upper_(std::move(upper)) {
  if (control_dims_ == 0 || control_dims_ > kMaxDims) throw ArgumentError("bad control dims");
  if (has_dark_time_ && (grid_.dims() < 2 || grid_.periodic(grid_.dims() - 1))) {
    throw ArgumentError("dark-time axis must be a trailing non-periodic dim");
  }
  const std::size_t n = grid_.size() * control_dims_;
  if (lower_.size() != n || upper_.size() != n) throw ArgumentError("bounds arrays do not match grid size");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lower_[i] <= upper_[i]) || !std::isfinite(lower_[i]) || !std::isfinite(upper_[i])) {
      throw ArgumentError("bounds cell " + std::to_string(i / control_dims_) + " has lower > upper or is not finite");
    }
  }
}

double ControlBoundsField::dark_time(std::size_t q) const {
  return has_dark_time_ ? grid_.coordinate(grid_.dims() - 1, q) : 0.0;
}

std::size_t ControlBoundsField::dark_index_for(double dark_elapsed) const {
  if (!has_dark_time_) return 0;
  const std::size_t d = grid_.dims() - 1;
  const double pos = (dark_elapsed - grid_.lo(d)) / grid_.spacing(d);
  const auto q = static_cast<long long>(std::ceil(pos - 1e-9));
  return static_cast<std::size_t>(std::clamp(q, 0LL, static_cast<long long>(grid_.shape(d)) - 1));
}

Grid ControlBoundsField::state_grid() const {
  if (!has_dark_time_) return grid_;
  const std::size_t n = grid_.dims() - 1;
  std::vector<double> lo(grid_.lo().begin(), grid_.lo().begin() + static_cast<long>(n));
  std::vector<double> hi(grid_.hi().begin(), grid_.hi().begin() + static_cast<long>(n));
  std::vector<std::size_t> shape(grid_.shape().begin(), grid_.shape().begin() + static_cast<long>(n));
  std::vector<bool> periodic(grid_.periodic().begin(), grid_.periodic().begin() + static_cast<long>(n));
  return Grid(lo, hi, shape, periodic);
}

ControlInterval ControlBoundsField::at(std::size_t state_flat, std::size_t dark_index) const {
  const std::size_t cell = state_flat * dark_samples() + dark_index;
  const std::size_t off = cell * control_dims_;
  return {SmallVec(std::span<const double>(lower_).subspan(off, control_dims_)),
          SmallVec(std::span<const double>(upper_).subspan(off, control_dims_))};
}

SmallVec ControlBoundsField::max_magnitude() const {
  SmallVec m(control_dims_, 0.0);
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    const std::size_t k = i % control_dims_;
    m[k] = std::max({m[k], std::abs(lower_[i]), std::abs(upper_[i])});
  }
  return m;
}

ControlBoundsField build_bounds_field(const ClosedLoopModel& model, const Grid& state_grid,
                                      std::optional<DarkTimeAxis> dark_time) {
  const std::size_t n = state_grid.dims();
  if (n != model.dynamics.state_dims()) throw ConfigError("bounds grid dims differ from the state dims");
  if (model.error.dims() != n) throw ConfigError("error box dims differ from the state dims");
  const auto* table = std::get_if<Tabulated>(&model.controller.model());
  const auto* net = std::get_if<Mlp>(&model.controller.model());
  if (!table && !net) {
    throw ConfigError("control bounds need a tabulated or mlp controller; use an exact Hamiltonian for this arm");
  }

  Grid grid = state_grid;
  std::size_t samples = 1;
  if (dark_time) {
    if (!(dark_time->t_max > 0.0) || dark_time->steps < 3) {
      throw ConfigError("dark-time axis needs t_max > 0 and at least 3 samples");
    }
    samples = dark_time->steps;
    auto lo = state_grid.lo();
    auto hi = state_grid.hi();
    auto shape = state_grid.shape();
    auto periodic = state_grid.periodic();
    lo.push_back(0.0);
    hi.push_back(dark_time->t_max);
    shape.push_back(samples);
    periodic.push_back(false);
    grid = Grid(lo, hi, shape, periodic);
  }

  const std::size_t cd = model.controller.control_dims();
  const std::size_t cells = state_grid.size() * samples;
  std::vector<double> lower(cells * cd), upper(cells * cd);
  const auto total = static_cast<long long>(cells);

#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (long long c = 0; c < total; ++c) {
    const auto cell = static_cast<std::size_t>(c);
    const std::size_t node = cell / samples;
    const std::size_t q = cell % samples;
    const double t_dark = dark_time ? grid.coordinate(n, q) : 0.0;
    const SmallVec x = state_grid.point(node);
    const SmallVec half = model.error.half_widths(t_dark);
    const ControlInterval b = table ? bounds_by_enumeration(*table, model.estimate(x, SmallVec(n)), half)
                                    : bounds_by_ibp_wrapped(*net, x, half, model.angle_dims);
    for (std::size_t k = 0; k < cd; ++k) {
      lower[cell * cd + k] = b.lower[k];
      upper[cell * cd + k] = b.upper[k];
    }
  }
  return ControlBoundsField(std::move(grid), dark_time.has_value(), cd, std::move(lower), std::move(upper));
}

void write_bounds(std::ostream& os, const ControlBoundsField& field) {
  io::Writer w(os);
  w.bytes(kBoundsMagic);
  w.u32(kFieldFormatVersion);
  w.u32(static_cast<std::uint32_t>(field.control_dims()));
  w.u8(field.has_dark_time() ? 1 : 0);
  write_grid_header(w, field.grid());
  w.f64s(std::vector<double>(field.lower().begin(), field.lower().end()));
  w.f64s(std::vector<double>(field.upper().begin(), field.upper().end()));
}

ControlBoundsField read_bounds(std::istream& is) {
  io::Reader r(is);
  if (r.bytes(4, "magic") != kBoundsMagic) throw FormatError("bad bounds magic", 0);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFieldFormatVersion) throw FormatError("unsupported bounds version", version_at);
  const std::size_t cd_at = r.offset();
  const auto cd = r.u32("control dims");
  if (cd == 0 || cd > kMaxDims) throw FormatError("bad control dims", cd_at);
  const std::size_t flag_at = r.offset();
  const auto flag = r.u8("dark-time flag");
  if (flag > 1) throw FormatError("dark-time flag must be 0 or 1", flag_at);
  const auto dims = r.u32("dims");
  Grid grid = read_grid_header(r, dims);
  const std::size_t lower_at = r.offset();
  auto lower = r.f64s(grid.size() * cd, "lower bounds");
  auto upper = r.f64s(grid.size() * cd, "upper bounds");
  r.expect_end();
  try {
    return ControlBoundsField(std::move(grid), flag == 1, cd, std::move(lower), std::move(upper));
  } catch (const ArgumentError& e) {
    throw FormatError(e.what(), lower_at);
  }
}

void export_bounds(const ControlBoundsField& field, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path.string() + " for writing");
  write_bounds(os, field);
}

ControlBoundsField import_bounds(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open " + path.string());
  return read_bounds(is);
}

}  // namespace percreach
