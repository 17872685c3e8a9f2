#include "percreach/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "kernels.hpp"
#include "percreach/binary_io.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"
#include "percreach/parallel.hpp"

namespace percreach {

namespace {

constexpr std::string_view kValueMagic = "RVVF";

// Writes dV/dtau = H(x, avg grad) + sum_i alpha_i (R_i - L_i) / 2 at every node.
template <class Kernel>
void rate(const Kernel& k, const Grid& grid, const double* v, double* out, BoundaryRule boundary) {
  const bool extrapolate = boundary == BoundaryRule::kExtrapolate;
  const std::size_t n = grid.dims();
  const std::size_t last = n - 1;
  const std::size_t row_len = grid.shape(last);
  const auto rows = static_cast<long long>(grid.size() / row_len);
  const SmallVec& alpha = k.dissipation();
  std::array<double, kMaxDims> inv_h{}, lo{}, h{};
  for (std::size_t d = 0; d < n; ++d) {
    h[d] = grid.spacing(d);
    inv_h[d] = 1.0 / h[d];
    lo[d] = grid.lo(d);
  }

#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (long long r = 0; r < rows; ++r) {
    std::array<std::size_t, kMaxDims> idx{};
    std::array<double, kMaxDims> x{}, p{};
    std::size_t rest = static_cast<std::size_t>(r);
    for (std::size_t d = last; d-- > 0;) {
      idx[d] = rest % grid.shape(d);
      rest /= grid.shape(d);
      x[d] = lo[d] + static_cast<double>(idx[d]) * h[d];
    }
    const std::size_t base = static_cast<std::size_t>(r) * row_len;
    for (std::size_t j = 0; j < row_len; ++j) {
      idx[last] = j;
      x[last] = lo[last] + static_cast<double>(j) * h[last];
      const std::size_t flat = base + j;
      const double vc = v[flat];
      double diss = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        const std::size_t s = grid.stride(d);
        const std::size_t m = grid.shape(d);
        const std::size_t kd = idx[d];
        double dl = 0.0, dr = 0.0;
        const bool has_l = kd > 0 || grid.periodic(d);
        const bool has_r = kd + 1 < m || grid.periodic(d);
        if (has_l) dl = (vc - v[kd > 0 ? flat - s : flat + (m - 1) * s]) * inv_h[d];
        if (has_r) dr = (v[kd + 1 < m ? flat + s : flat - (m - 1) * s] - vc) * inv_h[d];
        if (!has_l && extrapolate) dl = dr;
        if (!has_r && extrapolate) dr = dl;
        p[d] = 0.5 * (dl + dr);
        diss += alpha[d] * (dr - dl) * 0.5;
      }
      const detail::NodeRef node{x.data(), idx.data(), flat};
      out[flat] = k.value(node, p.data()) + diss;
    }
  }
}

std::size_t find_non_finite(const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return i;
  }
  return v.size();
}

TimeStepPlan step_plan(const SmallVec& alpha, const Grid& grid, double horizon, double cfl) {
  double rate_sum = 0.0;
  for (std::size_t d = 0; d < grid.dims(); ++d) {
    if (!std::isfinite(alpha[d])) throw ConfigError("dissipation coefficient is not finite");
    rate_sum += alpha[d] / grid.spacing(d);
  }
  std::size_t steps = 1;
  if (rate_sum > 0.0) {
    const double raw = horizon * rate_sum / cfl;
    if (!(raw < 1e8)) throw ConfigError("time step underflow: dissipation is too large for the horizon");
    steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
  }
  return {steps, horizon / static_cast<double>(steps), alpha};
}

std::size_t field_block_bytes(const Grid& g) { return 12 + g.dims() * 21 + g.size() * 8; }

}  // namespace

ValueField::ValueField(ScalarField failure, std::vector<double> times, std::vector<ScalarField> slices, double dt)
    : failure_(std::move(failure)), times_(std::move(times)), slices_(std::move(slices)), dt_(dt) {
  if (slices_.empty() || slices_.size() != times_.size()) throw ArgumentError("value field needs one time per slice");
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    if (!(slices_[i].grid() == failure_.grid())) throw ArgumentError("value slice grid differs from the failure grid");
    if (!std::isfinite(times_[i])) throw ArgumentError("value field times must be finite");
    if (i > 0 && !(times_[i] < times_[i - 1])) throw ArgumentError("value field times must be strictly descending");
  }
}

std::vector<double> numerical_rate(const ClosedLoopModel& model, const HamiltonianSpec& spec, const Grid& grid,
                                   std::span<const double> values, double dark_elapsed, double max_dark,
                                   BoundaryRule boundary) {
  validate_hamiltonian(model, spec, grid, max_dark);
  if (values.size() != grid.size()) throw ArgumentError("values do not match the grid");
  detail::AnyKernel kernel = detail::make_kernel(model, spec, grid, max_dark);
  std::vector<double> out(grid.size());
  std::visit(
      [&](auto& k) {
        k.prepare(dark_elapsed);
        rate(k, grid, values.data(), out.data(), boundary);
      },
      kernel);
  return out;
}

ValueField solve(const ClosedLoopModel& model, const FailureSpec& failure, const Grid& grid, const SolveConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  if (!std::isfinite(cfg.t0) || !std::isfinite(cfg.T) || cfg.T < cfg.t0) {
    throw ConfigError("solve needs finite t0 <= T");
  }
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) throw ConfigError("cfl must lie in (0, 1]");
  const HamiltonianSpec spec = cfg.hamiltonian ? *cfg.hamiltonian : default_hamiltonian(model);
  const double horizon = cfg.T - cfg.t0;
  validate_hamiltonian(model, spec, grid, horizon);

  const ScalarField l = failure.sample(grid);
  std::vector<double> times{cfg.T};
  std::vector<ScalarField> slices{l};
  if (horizon == 0.0) {
    ValueField vf(l, times, slices, 0.0);
    vf.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return vf;
  }

  detail::AnyKernel kernel = detail::make_kernel(model, spec, grid, horizon);
  const TimeStepPlan plan =
      step_plan(std::visit([](const auto& k) { return k.dissipation(); }, kernel), grid, horizon, cfg.cfl);
  const SmallVec& alpha = plan.dissipation;
  const std::size_t steps = plan.steps;
  const double dt = plan.dt;

  std::size_t stride = cfg.save_stride;
  if (stride == 0) {
    const std::size_t per_slice = grid.size() * sizeof(double);
    const std::size_t max_slices = std::max<std::size_t>(2, cfg.memory_cap_bytes / std::max<std::size_t>(per_slice, 1));
    stride = std::max<std::size_t>(1, (steps + max_slices - 2) / (max_slices - 1));
  }

  const std::vector<double> lv(l.values().begin(), l.values().end());
  std::vector<double> v = lv, k1(v.size()), stage(v.size()), k2(v.size());
  const auto total = static_cast<long long>(v.size());

  std::visit(
      [&](auto& k) {
        for (std::size_t n = 0; n < steps; ++n) {
          const double tau = horizon * static_cast<double>(n) / static_cast<double>(steps);
          k.prepare(tau);
          rate(k, grid, v.data(), k1.data(), cfg.boundary);
          // Tube form: the rate is clamped at zero so no stage can raise V.
#pragma omp parallel for schedule(static) num_threads(worker_count())
          for (long long i = 0; i < total; ++i) stage[i] = v[i] + dt * std::min(k1[i], 0.0);
          k.prepare(tau + dt);
          rate(k, grid, stage.data(), k2.data(), cfg.boundary);
#pragma omp parallel for schedule(static) num_threads(worker_count())
          for (long long i = 0; i < total; ++i) {
            const double next = 0.5 * (v[i] + stage[i] + dt * std::min(k2[i], 0.0));
            v[i] = std::min(next, lv[i]);
          }
          const std::size_t bad = find_non_finite(v);
          if (bad != v.size()) {
            throw SolverError("non-finite value at step " + std::to_string(n + 1) + ", cell " + std::to_string(bad));
          }
          const bool last = n + 1 == steps;
          if (last || (n + 1) % stride == 0) {
            // Snap the final time to t0 exactly.
            times.push_back(last ? cfg.t0 : cfg.T - dt * static_cast<double>(n + 1));
            slices.emplace_back(grid, v);
          }
        }
      },
      kernel);

  ValueField vf(l, std::move(times), std::move(slices), dt);
  vf.stats.steps = steps;
  vf.stats.dt = dt;
  vf.stats.save_stride = stride;
  vf.stats.dissipation = alpha;
  vf.stats.saturations = std::visit([](const auto& k) { return k.saturations(); }, kernel);
  if (vf.stats.saturations > 0) {
    vf.warnings.push_back("tan argument clamped at " + std::to_string(vf.stats.saturations) + " table entries");
  }
  vf.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return vf;
}

TimeStepPlan plan_time_step(const ClosedLoopModel& model, const Grid& grid, const SolveConfig& cfg) {
  if (!std::isfinite(cfg.t0) || !std::isfinite(cfg.T) || cfg.T < cfg.t0) {
    throw ConfigError("solve needs finite t0 <= T");
  }
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) throw ConfigError("cfl must lie in (0, 1]");
  const HamiltonianSpec spec = cfg.hamiltonian ? *cfg.hamiltonian : default_hamiltonian(model);
  const double horizon = cfg.T - cfg.t0;
  validate_hamiltonian(model, spec, grid, horizon);
  if (horizon == 0.0) return {1, 0.0, SmallVec(grid.dims(), 0.0)};
  const detail::AnyKernel kernel = detail::make_kernel(model, spec, grid, horizon);
  return step_plan(std::visit([](const auto& k) { return k.dissipation(); }, kernel), grid, horizon, cfg.cfl);
}

Interpolated query_value_checked(const ValueField& vf, const SmallVec& x, double t) {
  const auto& ts = vf.times();
  const double span = vf.T() - vf.t0();
  const double slack = 1e-12 * std::max(1.0, std::abs(vf.T()));
  if (!(t >= vf.t0() - slack && t <= vf.T() + slack)) throw ArgumentError("query time outside the solved horizon");
  if (ts.size() == 1 || span == 0.0) return interpolate_checked(vf.slices().front(), x);
  t = std::clamp(t, vf.t0(), vf.T());
  // times are descending; find k with ts[k] >= t >= ts[k+1].
  std::size_t k = 0;
  while (k + 2 < ts.size() && ts[k + 1] > t) ++k;
  const Interpolated a = interpolate_checked(vf.slices()[k], x);
  if (t == ts[k]) return a;
  const Interpolated b = interpolate_checked(vf.slices()[k + 1], x);
  if (t == ts[k + 1]) return b;
  const double w = (ts[k] - t) / (ts[k] - ts[k + 1]);
  return {(1.0 - w) * a.value + w * b.value, a.clamped || b.clamped};
}

double query_value(const ValueField& vf, const SmallVec& x, double t) { return query_value_checked(vf, x, t).value; }

void write_value_field(std::ostream& os, const ValueField& vf) {
  io::Writer w(os);
  w.bytes(kValueMagic);
  w.u32(kFieldFormatVersion);
  w.u32(static_cast<std::uint32_t>(vf.slices().size()));
  w.f64(vf.dt());
  write_field(os, vf.failure());
  for (std::size_t i = 0; i < vf.slices().size(); ++i) {
    io::Writer tw(os);
    tw.f64(vf.times()[i]);
    write_field(os, vf.slices()[i]);
  }
}

ValueField read_value_field(std::istream& is) {
  io::Reader r(is);
  if (r.bytes(4, "magic") != kValueMagic) throw FormatError("bad value-field magic", 0);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFieldFormatVersion) throw FormatError("unsupported value-field version", version_at);
  const std::size_t count_at = r.offset();
  const auto count = r.u32("slice count");
  if (count == 0) throw FormatError("value field has no slices", count_at);
  const double dt = r.f64("dt");
  std::size_t offset = r.offset();
  ScalarField failure = read_field(is, offset);
  offset += field_block_bytes(failure.grid());
  std::vector<double> times;
  std::vector<ScalarField> slices;
  for (std::uint32_t i = 0; i < count; ++i) {
    io::Reader tr(is, offset);
    times.push_back(tr.f64("slice time"));
    offset = tr.offset();
    slices.push_back(read_field(is, offset));
    if (!(slices.back().grid() == failure.grid())) throw FormatError("slice grid differs from the failure grid", offset);
    offset += field_block_bytes(failure.grid());
  }
  io::Reader end(is, offset);
  end.expect_end();
  try {
    return ValueField(std::move(failure), std::move(times), std::move(slices), dt);
  } catch (const ArgumentError& e) {
    throw FormatError(e.what(), count_at);
  }
}

void save_value_field(const std::filesystem::path& path, const ValueField& vf) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path.string() + " for writing");
  write_value_field(os, vf);
}

ValueField load_value_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open " + path.string());
  return read_value_field(is);
}

}  // namespace percreach
