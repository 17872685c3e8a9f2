#include "percreach/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "percreach/binary_io.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"

namespace percreach {

namespace {

constexpr std::string_view kBudgetMagic = "RVDB";

// Node values at time t, interpolated linearly between stored slices.
std::vector<double> values_at(const ValueField& vf, double t) {
  const auto& ts = vf.times();
  if (!(t >= vf.t0() - 1e-12 && t <= vf.T() + 1e-12)) throw ArgumentError("time outside the solved horizon");
  t = std::clamp(t, vf.t0(), vf.T());
  std::size_t k = 0;
  while (k + 1 < ts.size() && ts[k + 1] >= t) ++k;
  const auto a = vf.slices()[k].values();
  if (t == ts[k] || k + 1 == ts.size()) return {a.begin(), a.end()};
  const auto b = vf.slices()[k + 1].values();
  const double w = (ts[k] - t) / (ts[k] - ts[k + 1]);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - w) * a[i] + w * b[i];
  return out;
}

}  // namespace

bool brt_membership(const ValueField& vf, const SmallVec& x, double t) { return query_value(vf, x, t) <= 0.0; }

double safe_volume(const ValueField& vf, double t) {
  const std::vector<double> v = values_at(vf, t);
  const Grid& g = vf.grid();
  double vol = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) vol += g.cell_volume(i);
  }
  return vol;
}

SweepResult sweep_hyperparameters(const ClosedLoopModel& templ, const std::vector<double>& a_values,
                                  const std::vector<double>& b_values, const FailureSpec& failure, const Grid& grid,
                                  const SolveConfig& cfg, const SmallVec& x0) {
  const auto* base = std::get_if<TanProportional>(&templ.controller.model());
  if (!base) throw ConfigError("sweeps need a tan-proportional controller template");
  if (a_values.empty() || b_values.empty()) throw ConfigError("sweep axes must be non-empty");
  SweepResult out;
  out.a_values = a_values;
  out.b_values = b_values;
  out.values.assign(a_values.size() * b_values.size(), std::numeric_limits<double>::quiet_NaN());
  // Cells run one after another; each solve already uses the worker pool.
  for (std::size_t i = 0; i < a_values.size(); ++i) {
    for (std::size_t j = 0; j < b_values.size(); ++j) {
      try {
        TanProportional gains = *base;
        gains.a = a_values[i];
        gains.b = b_values[j];
        ClosedLoopModel m = templ;
        m.controller = Controller(gains, templ.dynamics.state_dims());
        SolveConfig c = cfg;
        c.hamiltonian = ExactTanProportional{};
        const ValueField vf = solve(m, failure, grid, c);
        out.values[i * b_values.size() + j] = query_value(vf, x0, vf.t0());
      } catch (const std::exception& e) {
        out.failures.push_back({i, j, e.what()});
      }
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a_values.size(); ++i) {
    for (std::size_t j = 0; j < b_values.size(); ++j) {
      const double v = out.at(i, j);
      if (std::isfinite(v) && v > best) {
        best = v;
        out.best_a = i;
        out.best_b = j;
        out.has_best = true;
      }
    }
  }
  return out;
}

void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "a,b,value\n";
  for (std::size_t i = 0; i < r.a_values.size(); ++i) {
    for (std::size_t j = 0; j < r.b_values.size(); ++j) {
      const double v = r.at(i, j);
      os << format_double(r.a_values[i]) << ',' << format_double(r.b_values[j]) << ','
         << (std::isnan(v) ? std::string("nan") : format_double(v)) << '\n';
    }
  }
}

DarkBudgetField::DarkBudgetField(Grid grid, std::vector<double> tau_star, double horizon)
    : grid_(std::move(grid)), tau_(std::move(tau_star)), horizon_(horizon) {
  if (tau_.size() != grid_.size()) throw ArgumentError("dark budget size differs from the grid");
  if (!(horizon_ >= 0.0) || !std::isfinite(horizon_)) throw ArgumentError("dark budget horizon must be >= 0");
  for (double v : tau_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("dark budget entries must be finite and >= 0");
  }
}

double DarkBudgetField::at(const SmallVec& x) const { return interpolate_checked(grid_, tau_, x).value; }

DarkBudgetField dark_budget_from(const ValueField& growing) {
  const auto& ts = growing.times();
  const double T = growing.T();
  const Grid& g = growing.grid();
  const auto surrogate = growing.failure().values();
  std::vector<double> tau(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (surrogate[i] <= 0.0) continue;
    double result = T - ts.back();
    for (std::size_t k = 1; k < ts.size(); ++k) {
      const double prev = growing.slices()[k - 1][i];
      const double cur = growing.slices()[k][i];
      if (cur <= 0.0) {
        const double tp = T - ts[k - 1];
        const double tc = T - ts[k];
        result = prev > 0.0 ? tp + (tc - tp) * prev / (prev - cur) : tp;
        break;
      }
    }
    tau[i] = result;
  }
  return DarkBudgetField(g, std::move(tau), T - growing.t0());
}

DarkBudgetResult synthesize_dark_budget(const ClosedLoopModel& growth_model, const ValueField& zero_uncertainty,
                                        double horizon, SolveConfig cfg) {
  if (!(horizon > 0.0)) throw ConfigError("dark budget horizon must be > 0");
  const ScalarField& surrogate = zero_uncertainty.initial();
  cfg.t0 = 0.0;
  cfg.T = horizon;
  ValueField growing = solve(growth_model, FailureSpec(ImportedField{surrogate}), surrogate.grid(), cfg);
  DarkBudgetField budget = dark_budget_from(growing);
  return {std::move(budget), std::move(growing)};
}

void save_dark_budget(const std::filesystem::path& path, const DarkBudgetField& budget) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open " + path.string() + " for writing");
  io::Writer w(os);
  w.bytes(kBudgetMagic);
  w.u32(kFieldFormatVersion);
  w.f64(budget.horizon());
  write_field(os, budget.as_field());
}

DarkBudgetField load_dark_budget(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open " + path.string());
  io::Reader r(is);
  if (r.bytes(4, "magic") != kBudgetMagic) throw FormatError("bad dark-budget magic", 0);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFieldFormatVersion) throw FormatError("unsupported dark-budget version", version_at);
  const double horizon = r.f64("horizon");
  const std::size_t field_at = r.offset();
  ScalarField f = read_field(is, field_at);
  io::Reader end(is, field_at);
  end.expect_end();
  try {
    return DarkBudgetField(f.grid(), std::vector<double>(f.values().begin(), f.values().end()), horizon);
  } catch (const ArgumentError& e) {
    throw FormatError(e.what(), field_at);
  }
}

LightAction light_policy_step(const DarkBudgetField& budget, const SmallVec& x, double elapsed_dark, double margin) {
  return elapsed_dark + margin >= budget.at(x) ? LightAction::kLightsOn : LightAction::kKeepOff;
}

Trajectory policy_rollout(const DarkBudgetField& budget, const ValueField& zero_uncertainty,
                          const ClosedLoopModel& growth_model, const FailureSpec& failure, const SmallVec& x0,
                          const PolicyRolloutOptions& opts) {
  if (!(opts.dt > 0.0)) throw ArgumentError("policy rollout step must be > 0");
  if (!(opts.horizon >= 0.0)) throw ArgumentError("policy rollout horizon must be >= 0");
  if (!(zero_uncertainty.grid() == budget.grid())) throw ConfigError("budget and value grids differ");
  const HamiltonianSpec spec = opts.hamiltonian ? *opts.hamiltonian : default_hamiltonian(growth_model);
  const double margin = opts.margin > 0.0 ? opts.margin : 2.0 * opts.dt;
  // l' as a one-slice field so value_gradient can read it.
  const ScalarField& lp = zero_uncertainty.initial();
  const ValueField surrogate(lp, {0.0}, {lp});
  const Grid& g = budget.grid();

  Trajectory tr;
  tr.times.push_back(0.0);
  tr.states.push_back(x0);
  tr.l.push_back(failure.evaluate(x0));
  tr.min_l = tr.l.back();
  const auto steps = static_cast<std::size_t>(std::ceil(opts.horizon / opts.dt - 1e-9));
  const double dt = steps ? opts.horizon / static_cast<double>(steps) : 0.0;
  double dark = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const SmallVec x = tr.states.back();
    const bool on = light_policy_step(budget, x, dark, margin) == LightAction::kLightsOn;
    if (on) dark = 0.0;
    tr.lights.push_back(on ? 1 : 0);
    const SmallVec grad = value_gradient(surrogate, x, 0.0);
    const HamiltonianPoint hp = realizable_worst_case(growth_model, spec, x, grad, dark);
    bool sat = false;
    const SmallVec f = eval_closed_loop(growth_model, x, hp.d_star, hp.e_star, dark, &sat);
    tr.saturated = tr.saturated || sat;
    tr.perceived.push_back(x + hp.e_star);
    tr.controls.push_back(growth_model.control(x, hp.e_star).u);
    tr.errors.push_back(hp.e_star);
    tr.disturbances.push_back(hp.d_star);
    tr.dark.push_back(dark);
    const SmallVec next = x + dt * f;
    tr.times.push_back(k + 1 == steps ? opts.horizon : dt * static_cast<double>(k + 1));
    tr.states.push_back(next);
    tr.l.push_back(failure.evaluate(next));
    tr.min_l = std::min(tr.min_l, tr.l.back());
    dark += dt;
    bool out = false;
    for (std::size_t d = 0; d < g.dims(); ++d) {
      if (!g.periodic(d) && (next[d] < g.lo(d) - 1e-9 * g.spacing(d) || next[d] > g.hi(d) + 1e-9 * g.spacing(d))) {
        out = true;
      }
    }
    if (out) {
      tr.exited_grid = true;
      break;
    }
  }
  return tr;
}

}  // namespace percreach
