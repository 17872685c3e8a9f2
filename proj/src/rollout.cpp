#include "percreach/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "json.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"
#include "percreach/parallel.hpp"

namespace percreach {

namespace {

std::size_t step_count(double span, double dt) {
  if (span <= 0.0) return 0;
  if (!(dt > 0.0)) throw ArgumentError("rollout step must be > 0");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / dt - 1e-9)));
}

bool outside(const Grid& g, const SmallVec& x) {
  for (std::size_t d = 0; d < g.dims(); ++d) {
    if (g.periodic(d)) continue;
    const double slack = 1e-9 * g.spacing(d);
    if (x[d] < g.lo(d) - slack || x[d] > g.hi(d) + slack) return true;
  }
  return false;
}

void start(Trajectory& tr, const FailureSpec& failure, const SmallVec& x0, double t0) {
  tr.times.push_back(t0);
  tr.states.push_back(x0);
  tr.l.push_back(failure.evaluate(x0));
  tr.min_l = tr.l.back();
}

void apply_step(Trajectory& tr, const ClosedLoopModel& model, const FailureSpec& failure, double t_next, double dt,
                const SmallVec& e, const SmallVec& d, double dark) {
  const SmallVec x = tr.states.back();
  bool sat = false;
  const SmallVec f = eval_closed_loop(model, x, d, e, dark, &sat);
  tr.saturated = tr.saturated || sat;
  tr.perceived.push_back(x + e);
  tr.controls.push_back(model.control(x, e).u);
  tr.errors.push_back(e);
  tr.disturbances.push_back(d);
  tr.dark.push_back(dark);
  const SmallVec next = x + dt * f;
  tr.times.push_back(t_next);
  tr.states.push_back(next);
  tr.l.push_back(failure.evaluate(next));
  tr.min_l = std::min(tr.min_l, tr.l.back());
}

SmallVec disturbance_center(const Dynamics& dyn) {
  const Box& b = dyn.disturbance();
  if (b.empty()) return {};
  return 0.5 * (b.lo + b.hi);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::mt19937_64 substream(std::uint64_t seed, std::size_t index) {
  const auto i = static_cast<std::uint64_t>(index);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
  return std::mt19937_64(seq);
}

// One sampled trajectory; records into tr when given, else only tracks min l.
double sample_rollout(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                      double T, double dt_hint, std::uint64_t seed, std::size_t index, Trajectory* tr) {
  std::mt19937_64 rng = substream(seed, index);
  const std::size_t steps = step_count(T - t0, dt_hint);
  const double dt = steps ? (T - t0) / static_cast<double>(steps) : 0.0;
  const Box& dbox = model.dynamics.disturbance();
  Trajectory local;
  Trajectory& out = tr ? *tr : local;
  start(out, failure, x0, t0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + dt * static_cast<double>(k);
    const double dark = T - t;
    const SmallVec half = model.error.half_widths(dark);
    SmallVec e(x0.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = (2.0 * unit(rng) - 1.0) * half[i];
    SmallVec d(dbox.dims());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = dbox.lo[i] + unit(rng) * (dbox.hi[i] - dbox.lo[i]);
    const double t_next = k + 1 == steps ? T : t0 + dt * static_cast<double>(k + 1);
    if (tr) {
      apply_step(out, model, failure, t_next, dt, e, d, dark);
    } else {
      // Same arithmetic as apply_step without the bookkeeping.
      const SmallVec x = out.states.back();
      const SmallVec next = x + dt * eval_closed_loop(model, x, d, e, dark);
      out.states.back() = next;
      out.min_l = std::min(out.min_l, failure.evaluate(next));
    }
  }
  return out.min_l;
}

}  // namespace

std::size_t Trajectory::light_activations() const {
  return static_cast<std::size_t>(std::count(lights.begin(), lights.end(), std::uint8_t{1}));
}

SmallVec value_gradient(const ValueField& vf, const SmallVec& x, double t) {
  const Grid& g = vf.grid();
  SmallVec grad(g.dims());
  for (std::size_t d = 0; d < g.dims(); ++d) {
    const double h = g.spacing(d);
    SmallVec xp = x, xm = x;
    if (g.periodic(d)) {
      xp[d] = x[d] + h;
      xm[d] = x[d] - h;
    } else {
      const double c = std::clamp(x[d], g.lo(d), g.hi(d));
      xp[d] = std::min(c + h, g.hi(d));
      xm[d] = std::max(c - h, g.lo(d));
    }
    grad[d] = (query_value(vf, xp, t) - query_value(vf, xm, t)) / (xp[d] - xm[d]);
  }
  return grad;
}

Trajectory worst_case_rollout(const ValueField& vf, const ClosedLoopModel& model, const FailureSpec& failure,
                              const SmallVec& x0, double t0, const RolloutOptions& opts) {
  if (x0.size() != vf.grid().dims()) throw ArgumentError("initial state dims differ from the grid");
  const double T = vf.T();
  if (!(t0 >= vf.t0() && t0 <= T)) throw ArgumentError("rollout start time outside the solved horizon");
  const HamiltonianSpec spec = opts.hamiltonian ? *opts.hamiltonian : default_hamiltonian(model);
  Trajectory tr;
  start(tr, failure, x0, t0);
  if (outside(vf.grid(), x0)) {
    tr.exited_grid = true;
    return tr;
  }
  const double hint = opts.dt > 0.0 ? opts.dt : vf.dt();
  const std::size_t steps = T > t0 ? step_count(T - t0, hint) : 0;
  const double dt = steps ? (T - t0) / static_cast<double>(steps) : 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + dt * static_cast<double>(k);
    const SmallVec& x = tr.states.back();
    const SmallVec grad = value_gradient(vf, x, t);
    const HamiltonianPoint hp = realizable_worst_case(model, spec, x, grad, T - t);
    const double t_next = k + 1 == steps ? T : t0 + dt * static_cast<double>(k + 1);
    apply_step(tr, model, failure, t_next, dt, hp.e_star, hp.d_star, T - t);
    if (outside(vf.grid(), tr.states.back())) {
      tr.exited_grid = true;
      break;
    }
  }
  return tr;
}

Trajectory nominal_rollout(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                           double T, double dt_hint) {
  if (T < t0) throw ArgumentError("rollout needs t0 <= T");
  Trajectory tr;
  start(tr, failure, x0, t0);
  const std::size_t steps = step_count(T - t0, dt_hint);
  const double dt = steps ? (T - t0) / static_cast<double>(steps) : 0.0;
  const SmallVec d = disturbance_center(model.dynamics);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + dt * static_cast<double>(k);
    const double t_next = k + 1 == steps ? T : t0 + dt * static_cast<double>(k + 1);
    apply_step(tr, model, failure, t_next, dt, SmallVec(x0.size()), d, T - t);
  }
  return tr;
}

MonteCarloResult monte_carlo(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                             double T, const MonteCarloOptions& opts) {
  if (opts.samples == 0) throw ArgumentError("monte carlo needs at least one sample");
  if (T < t0) throw ArgumentError("monte carlo needs t0 <= T");
  if (T > t0 && !(opts.dt > 0.0)) throw ArgumentError("monte carlo step must be > 0");
  std::vector<double> per(opts.samples);
  const auto total = static_cast<long long>(opts.samples);
#pragma omp parallel for schedule(dynamic, 4) num_threads(worker_count())
  for (long long i = 0; i < total; ++i) {
    per[static_cast<std::size_t>(i)] =
        sample_rollout(model, failure, x0, t0, T, opts.dt, opts.seed, static_cast<std::size_t>(i), nullptr);
  }
  MonteCarloResult out;
  out.running_min.resize(per.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < per.size(); ++i) {
    if (per[i] < best) {
      best = per[i];
      out.worst_sample = i;
    }
    out.running_min[i] = best;
  }
  out.value = best;
  return out;
}

double monte_carlo_value(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                         double T, const MonteCarloOptions& opts) {
  return monte_carlo(model, failure, x0, t0, T, opts).value;
}

Trajectory monte_carlo_sample(const ClosedLoopModel& model, const FailureSpec& failure, const SmallVec& x0, double t0,
                              double T, const MonteCarloOptions& opts, std::size_t index) {
  Trajectory tr;
  sample_rollout(model, failure, x0, t0, T, opts.dt, opts.seed, index, &tr);
  return tr;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  const std::size_t n = tr.states.empty() ? 0 : tr.states.front().size();
  const std::size_t m = tr.controls.empty() ? 0 : tr.controls.front().size();
  const bool lights = !tr.lights.empty();
  os << "t";
  for (std::size_t i = 0; i < n; ++i) os << ",x" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",xhat" << i;
  for (std::size_t i = 0; i < m; ++i) os << ",u" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",e" << i;
  os << ",l";
  if (lights) os << ",lights";
  os << '\n';
  for (std::size_t k = 0; k < tr.states.size(); ++k) {
    const bool has_step = k < tr.controls.size();
    os << format_double(tr.times[k]);
    for (std::size_t i = 0; i < n; ++i) os << ',' << format_double(tr.states[k][i]);
    for (std::size_t i = 0; i < n; ++i) os << ',' << (has_step ? format_double(tr.perceived[k][i]) : "");
    for (std::size_t i = 0; i < m; ++i) os << ',' << (has_step ? format_double(tr.controls[k][i]) : "");
    for (std::size_t i = 0; i < n; ++i) os << ',' << (has_step ? format_double(tr.errors[k][i]) : "");
    os << ',' << format_double(tr.l[k]);
    if (lights) os << ',' << (k < tr.lights.size() ? std::to_string(tr.lights[k]) : "");
    os << '\n';
  }
}

std::string trajectory_summary_json(const Trajectory& tr, double seconds) {
  nlohmann::ordered_json j;
  j["min_l"] = tr.min_l;
  j["violated"] = tr.violated();
  j["exited_grid"] = tr.exited_grid;
  j["saturated"] = tr.saturated;
  j["steps"] = tr.controls.size();
  if (!tr.lights.empty()) j["light_activations"] = tr.light_activations();
  j["runtime_s"] = seconds;
  return j.dump();
}

}  // namespace percreach
