#pragma once

// Grid-node Hamiltonian kernels used by the solver. Each kernel is a concrete
// type so the per-node loop is monomorphic; make_kernel picks the variant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <variant>
#include <vector>

#include "percreach/bounds.hpp"
#include "percreach/errors.hpp"
#include "percreach/hamiltonian.hpp"
#include "percreach/models.hpp"
#include "percreach/parallel.hpp"

namespace percreach::detail {

struct NodeRef {
  const double* x;
  const std::size_t* idx;
  std::size_t flat;
};

// Largest |x_i| of an affine map row over the grid box, found at the corners.
inline double max_abs_affine_over_box(const Grid& grid, const double* row, double offset) {
  double lo = offset, hi = offset;
  for (std::size_t d = 0; d < grid.dims(); ++d) {
    const double a = row[d] * grid.lo(d);
    const double b = row[d] * grid.hi(d);
    lo += std::min(a, b);
    hi += std::max(a, b);
  }
  return std::max(std::abs(lo), std::abs(hi));
}

class DubinsView {
 public:
  DubinsView(const Dubins3D& m, const Grid& grid) : speed_(m.speed) {
    if (grid.dims() != 3) throw ConfigError("dubins dynamics need a 3-dim grid");
    for (std::size_t k = 0; k < grid.shape(2); ++k) {
      sin_.push_back(std::sin(grid.coordinate(2, k)));
      cos_.push_back(std::cos(grid.coordinate(2, k)));
    }
  }
  std::size_t control_dims() const { return 1; }
  double drift_dot(const NodeRef& n, const double* p) const {
    const std::size_t k = n.idx[2];
    return speed_ * (p[0] * sin_[k] + p[1] * cos_[k]);
  }
  void control_coeffs(const NodeRef&, const double* p, double* c) const { c[0] = p[2]; }
  double min_disturbance(const NodeRef&, const double*) const { return 0.0; }
  SmallVec drift_bound(const Grid&) const { return {std::abs(speed_), std::abs(speed_), 0.0}; }
  SmallVec control_bound(const SmallVec& umax) const { return {0.0, 0.0, umax[0]}; }
  SmallVec disturbance_bound() const { return SmallVec(3, 0.0); }

 private:
  double speed_;
  std::vector<double> sin_, cos_;
};

class LinearView {
 public:
  LinearView(const LinearDynamics& m, const Box& disturbance, const Grid& grid)
      : n_(static_cast<std::size_t>(m.a.rows())),
        m_(static_cast<std::size_t>(m.b.cols())),
        q_(disturbance.dims()),
        dist_(disturbance) {
    if (grid.dims() != n_) throw ConfigError("linear dynamics dims differ from the grid dims");
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) a_.push_back(m.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      for (std::size_t k = 0; k < m_; ++k) b_.push_back(m.b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      for (std::size_t k = 0; k < q_; ++k) e_.push_back(m.e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
  }
  std::size_t control_dims() const { return m_; }
  std::size_t state_dims() const { return n_; }
  double a(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  double b(std::size_t i, std::size_t k) const { return b_[i * m_ + k]; }
  double drift_dot(const NodeRef& n, const double* p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double ax = 0.0;
      for (std::size_t j = 0; j < n_; ++j) ax += a_[i * n_ + j] * n.x[j];
      s += p[i] * ax;
    }
    return s;
  }
  void control_coeffs(const NodeRef&, const double* p, double* c) const {
    for (std::size_t k = 0; k < m_; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) s += b_[i * m_ + k] * p[i];
      c[k] = s;
    }
  }
  double min_disturbance(const NodeRef&, const double* p) const {
    double total = 0.0;
    for (std::size_t k = 0; k < q_; ++k) {
      double g = 0.0;
      for (std::size_t i = 0; i < n_; ++i) g += e_[i * q_ + k] * p[i];
      total += std::min(g * dist_.lo[k], g * dist_.hi[k]);
    }
    return total;
  }
  SmallVec drift_bound(const Grid& grid) const {
    SmallVec out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = max_abs_affine_over_box(grid, &a_[i * n_], 0.0);
    return out;
  }
  SmallVec control_bound(const SmallVec& umax) const {
    SmallVec out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < m_; ++k) out[i] += std::abs(b_[i * m_ + k]) * umax[k];
    }
    return out;
  }
  SmallVec disturbance_bound() const {
    SmallVec out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < q_; ++k) {
        out[i] += std::abs(e_[i * q_ + k]) * std::max(std::abs(dist_.lo[k]), std::abs(dist_.hi[k]));
      }
    }
    return out;
  }

 private:
  std::size_t n_, m_, q_;
  Box dist_;
  std::vector<double> a_, b_, e_;
};

template <class View>
SmallVec combine_bounds(const View& view, const Grid& grid, const SmallVec& umax) {
  return view.drift_bound(grid) + view.control_bound(umax) + view.disturbance_bound();
}

// ---------------------------------------------------------------------------

template <class View>
class TanKernel {
 public:
  TanKernel(View view, const ClosedLoopModel& model, const Grid& grid, double max_dark)
      : view_(std::move(view)), ctrl_(std::get<TanProportional>(model.controller.model())), error_(model.error) {
    pos_axis_ = grid.axis(ctrl_.position_dim);
    head_axis_ = grid.axis(ctrl_.heading_dim);
    low_.resize(pos_axis_.size() * head_axis_.size());
    high_.resize(low_.size());
    // Largest |tan| over the grid at the widest error box.
    const SmallVec half = error_.half_widths(max_dark);
    const double r = std::abs(ctrl_.a) * half[ctrl_.position_dim] + std::abs(ctrl_.b) * half[ctrl_.heading_dim];
    double umax = 0.0;
    for (double p : pos_axis_) {
      for (double h : head_axis_) {
        const double arg = ctrl_.a * p + ctrl_.b * h;
        umax = std::max({umax, std::abs(std::tan(clamp_tan_argument(arg - r))),
                         std::abs(std::tan(clamp_tan_argument(arg + r)))});
      }
    }
    alpha_ = combine_bounds(view_, grid, SmallVec{umax});
  }

  const SmallVec& dissipation() const { return alpha_; }
  std::size_t saturations() const { return saturations_; }

  void prepare(double dark_elapsed) {
    const SmallVec half = error_.half_widths(dark_elapsed);
    const double r = std::abs(ctrl_.a) * half[ctrl_.position_dim] + std::abs(ctrl_.b) * half[ctrl_.heading_dim];
    if (prepared_ && r == radius_) return;
    prepared_ = true;
    radius_ = r;
    std::size_t sat = 0;
    const std::size_t nh = head_axis_.size();
    for (std::size_t i = 0; i < pos_axis_.size(); ++i) {
      for (std::size_t j = 0; j < nh; ++j) {
        const double arg = ctrl_.a * pos_axis_[i] + ctrl_.b * head_axis_[j];
        bool s = false;
        low_[i * nh + j] = std::tan(clamp_tan_argument(arg - r, &s));
        high_[i * nh + j] = std::tan(clamp_tan_argument(arg + r, &s));
        sat += s ? 1 : 0;
      }
    }
    saturations_ += sat;
  }

  double value(const NodeRef& n, const double* p) const {
    double c;
    view_.control_coeffs(n, p, &c);
    const std::size_t cell = n.idx[ctrl_.position_dim] * head_axis_.size() + n.idx[ctrl_.heading_dim];
    const double u = c > 0.0 ? low_[cell] : (c < 0.0 ? high_[cell] : 0.0);
    return view_.drift_dot(n, p) + c * u + view_.min_disturbance(n, p);
  }

 private:
  View view_;
  TanProportional ctrl_;
  ErrorBound error_;
  std::vector<double> pos_axis_, head_axis_, low_, high_;
  SmallVec alpha_;
  double radius_ = 0.0;
  bool prepared_ = false;
  std::size_t saturations_ = 0;
};

template <class View>
class LinearFeedbackKernel {
 public:
  LinearFeedbackKernel(View view, const ClosedLoopModel& model, const Grid& grid, double max_dark)
      : view_(std::move(view)), error_(model.error) {
    const auto& fb = std::get<LinearFeedback>(model.controller.model());
    m_ = static_cast<std::size_t>(fb.gain.rows());
    n_ = static_cast<std::size_t>(fb.gain.cols());
    for (std::size_t k = 0; k < m_; ++k) {
      for (std::size_t j = 0; j < n_; ++j) k_.push_back(fb.gain(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
      k0_.push_back(fb.offset[static_cast<Eigen::Index>(k)]);
    }
    const SmallVec half = error_.half_widths(max_dark);
    if constexpr (std::is_same_v<View, LinearView>) {
      // Closed-loop rows (A + B K) x + B k0 bounded jointly, which is tighter
      // than bounding drift and control separately.
      alpha_ = SmallVec(n_);
      const SmallVec dist = view_.disturbance_bound();
      for (std::size_t i = 0; i < n_; ++i) {
        std::vector<double> row(n_, 0.0);
        double off = 0.0;
        double err = 0.0;
        for (std::size_t j = 0; j < n_; ++j) {
          double bk = 0.0;
          for (std::size_t k = 0; k < m_; ++k) bk += view_.b(i, k) * k_[k * n_ + j];
          row[j] = view_.a(i, j) + bk;
          err += std::abs(bk) * half[j];
        }
        for (std::size_t k = 0; k < m_; ++k) off += view_.b(i, k) * k0_[k];
        alpha_[i] = max_abs_affine_over_box(grid, row.data(), off) + err + dist[i];
      }
    } else {
      SmallVec umax(m_);
      for (std::size_t k = 0; k < m_; ++k) {
        double err = 0.0;
        for (std::size_t j = 0; j < n_; ++j) err += std::abs(k_[k * n_ + j]) * half[j];
        umax[k] = max_abs_affine_over_box(grid, &k_[k * n_], k0_[k]) + err;
      }
      alpha_ = combine_bounds(view_, grid, umax);
    }
  }

  const SmallVec& dissipation() const { return alpha_; }
  std::size_t saturations() const { return 0; }
  void prepare(double dark_elapsed) { half_ = error_.half_widths(dark_elapsed); }

  double value(const NodeRef& n, const double* p) const {
    std::array<double, kMaxDims> c{};
    view_.control_coeffs(n, p, c.data());
    double h = view_.drift_dot(n, p) + view_.min_disturbance(n, p);
    for (std::size_t k = 0; k < m_; ++k) {
      double u = k0_[k];
      for (std::size_t j = 0; j < n_; ++j) u += k_[k * n_ + j] * n.x[j];
      h += c[k] * u;
    }
    for (std::size_t j = 0; j < n_; ++j) {
      double w = 0.0;
      for (std::size_t k = 0; k < m_; ++k) w += c[k] * k_[k * n_ + j];
      h -= std::abs(w) * half_[j];
    }
    return h;
  }

 private:
  View view_;
  ErrorBound error_;
  std::size_t m_ = 0, n_ = 0;
  std::vector<double> k_, k0_;
  SmallVec half_;
  SmallVec alpha_;
};

template <class View>
class EnumeratedKernel {
 public:
  EnumeratedKernel(View view, const ClosedLoopModel& model, const Grid& grid, const ExactEnumerated& spec,
                   double max_dark)
      : view_(std::move(view)),
        model_(&model),
        grid_(grid),
        table_(&std::get<Tabulated>(model.controller.model())),
        quantum_(spec.error_quantum),
        cell_margin_(spec.cell_margin) {
    if (!(quantum_ > 0.0)) throw ConfigError("error_quantum must be > 0");
    if (!(cell_margin_ >= 0.0)) throw ConfigError("cell_margin must be >= 0");
    const std::size_t cd = table_->control_dims;
    cell_letter_.resize(table_->grid.size());
    for (std::size_t cell = 0; cell < table_->grid.size(); ++cell) {
      const SmallVec u(std::span<const double>(table_->table).subspan(cell * cd, cd));
      auto it = std::find(alphabet_.begin(), alphabet_.end(), u);
      if (it == alphabet_.end()) {
        if (alphabet_.size() == 64) {
          throw ConfigError("tabulated controller has more than 64 distinct outputs; use interval bounds instead");
        }
        alphabet_.push_back(u);
        it = alphabet_.end() - 1;
      }
      cell_letter_[cell] = static_cast<std::uint8_t>(it - alphabet_.begin());
    }
    SmallVec umax(cd, 0.0);
    for (const auto& u : alphabet_) {
      for (std::size_t k = 0; k < cd; ++k) umax[k] = std::max(umax[k], std::abs(u[k]));
    }
    alpha_ = combine_bounds(view_, grid, umax);
    (void)max_dark;
    masks_.resize(grid.size());
  }

  const SmallVec& dissipation() const { return alpha_; }
  std::size_t saturations() const { return 0; }
  std::size_t alphabet_size() const { return alphabet_.size(); }

  void prepare(double dark_elapsed) {
    long long q = 0;
    if (model_->error.time_varying()) {
      q = static_cast<long long>(std::ceil(std::max(dark_elapsed, 0.0) / quantum_ - 1e-9));
    }
    if (q == current_) return;
    current_ = q;
    SmallVec half = model_->error.half_widths(static_cast<double>(q) * quantum_);
    for (std::size_t d = 0; d < half.size(); ++d) half[d] += cell_margin_ * grid_.spacing(d);
    const auto total = static_cast<long long>(grid_.size());
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long long i = 0; i < total; ++i) {
      const auto flat = static_cast<std::size_t>(i);
      const SmallVec x = model_->estimate(grid_.point(flat), SmallVec(grid_.dims()));
      const Enumeration en = enumerate_table(*table_, x, half);
      std::uint64_t mask = 0;
      for (std::size_t cell : en.cells) mask |= std::uint64_t{1} << cell_letter_[cell];
      masks_[flat] = mask;
    }
  }

  double value(const NodeRef& n, const double* p) const {
    std::array<double, kMaxDims> c{};
    view_.control_coeffs(n, p, c.data());
    const std::size_t cd = view_.control_dims();
    double best = std::numeric_limits<double>::infinity();
    std::uint64_t mask = masks_[n.flat];
    while (mask) {
      const int b = std::countr_zero(mask);
      mask &= mask - 1;
      const SmallVec& u = alphabet_[static_cast<std::size_t>(b)];
      double s = 0.0;
      for (std::size_t k = 0; k < cd; ++k) s += c[k] * u[k];
      best = std::min(best, s);
    }
    return view_.drift_dot(n, p) + best + view_.min_disturbance(n, p);
  }

 private:
  View view_;
  const ClosedLoopModel* model_;
  Grid grid_;
  const Tabulated* table_;
  double quantum_;
  double cell_margin_;
  std::vector<SmallVec> alphabet_;
  std::vector<std::uint8_t> cell_letter_;
  std::vector<std::uint64_t> masks_;
  long long current_ = -1;
  SmallVec alpha_;
};

template <class View>
class BoundedKernel {
 public:
  BoundedKernel(View view, const ControlBoundsField& field, const Grid& grid)
      : view_(std::move(view)), field_(&field) {
    if (!(field.state_grid() == grid)) throw ConfigError("control-bounds grid differs from the solver grid");
    if (field.control_dims() != view_.control_dims()) throw ConfigError("control-bounds dims differ from the dynamics");
    alpha_ = combine_bounds(view_, grid, field.max_magnitude());
  }

  const SmallVec& dissipation() const { return alpha_; }
  std::size_t saturations() const { return 0; }
  void prepare(double dark_elapsed) { q_ = field_->dark_index_for(dark_elapsed); }

  double value(const NodeRef& n, const double* p) const {
    std::array<double, kMaxDims> c{};
    view_.control_coeffs(n, p, c.data());
    const std::size_t cd = field_->control_dims();
    const std::size_t off = (n.flat * field_->dark_samples() + q_) * cd;
    const auto lo = field_->lower();
    const auto hi = field_->upper();
    double h = view_.drift_dot(n, p) + view_.min_disturbance(n, p);
    for (std::size_t k = 0; k < cd; ++k) h += std::min(c[k] * lo[off + k], c[k] * hi[off + k]);
    return h;
  }

 private:
  View view_;
  const ControlBoundsField* field_;
  std::size_t q_ = 0;
  SmallVec alpha_;
};

using AnyKernel = std::variant<TanKernel<DubinsView>, TanKernel<LinearView>, LinearFeedbackKernel<DubinsView>,
                               LinearFeedbackKernel<LinearView>, EnumeratedKernel<DubinsView>,
                               EnumeratedKernel<LinearView>, BoundedKernel<DubinsView>, BoundedKernel<LinearView>>;

// The model must outlive the kernel.
AnyKernel make_kernel(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                      double max_dark);

}  // namespace percreach::detail
