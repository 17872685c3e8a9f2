#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "config.hpp"
#include "percreach/analysis.hpp"
#include "percreach/bounds.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"
#include "percreach/parallel.hpp"
#include "percreach/rollout.hpp"
#include "percreach/solver.hpp"

namespace percreach::cli {

namespace {

using Clock = std::chrono::steady_clock;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Output directory plus the bookkeeping that ends up in manifest.json.
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw ConfigError("cannot create run directory " + root_.string() + ": " + ec.message());
  }

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path output(const std::string& name) {
    if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
    return root_ / name;
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream os(output(name), std::ios::binary);
    if (!os) throw ArgumentError("cannot write " + (root_ / name).string());
    os << text;
  }

  template <class F>
  void write_stream(const std::string& name, F&& f) {
    std::ofstream os(output(name), std::ios::binary);
    if (!os) throw ArgumentError("cannot write " + (root_ / name).string());
    f(os);
  }

  void warn(std::string w) { warnings_.push_back(std::move(w)); }
  void warn_all(const std::vector<std::string>& ws) {
    for (const auto& w : ws) warn(w);
  }

  void write_manifest(const std::string& subcommand, const Json& config, int exit_code, double seconds) {
    Json m;
    m["tool"] = "percreach";
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["config_sha1"] = git_blob_sha1(config.dump());
    Json outs = Json::array();
    for (const auto& name : outputs_) {
      const std::string content = read_file(root_ / name);
      outs.push_back({{"path", name}, {"bytes", content.size()}, {"sha1", git_blob_sha1(content)}});
    }
    m["outputs"] = outs;
    m["warnings"] = warnings_;
    m["exit_code"] = exit_code;
    m["workers"] = worker_count();
    m["wall_time_s"] = seconds;
    std::ofstream os(root_ / "manifest.json", std::ios::binary);
    os << m.dump(2) << '\n';
  }

 private:
  std::filesystem::path root_;
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
};

Json vec_json(const SmallVec& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

SmallVec require_x0(const RunConfig& run) {
  if (!run.has_x0) throw ConfigError("config error at /x0: this subcommand needs an initial state");
  return run.scenario.x0;
}

std::vector<std::size_t> pin_at(const Grid& g, const SmallVec* x) {
  std::vector<std::size_t> idx(g.dims());
  for (std::size_t d = 0; d < g.dims(); ++d) {
    idx[d] = x ? g.nearest_index(d, g.wrap(d, (*x)[d])) : g.shape(d) / 2;
  }
  return idx;
}

ValueField solve_and_report(RunConfig& run, RunDir& dir) {
  const Scenario& s = run.scenario;
  ValueField vf = solve(s.model, s.failure, s.grid, s.solve);
  dir.warn_all(vf.warnings);
  return vf;
}

Json stats_json(const ValueField& vf) {
  Json j;
  j["steps"] = vf.stats.steps;
  j["dt"] = vf.stats.dt;
  j["save_stride"] = vf.stats.save_stride;
  j["stored_slices"] = vf.slices().size();
  j["dissipation"] = vec_json(vf.stats.dissipation);
  j["tan_saturations"] = vf.stats.saturations;
  return j;
}

int cmd_solve(RunConfig& run, RunDir& dir) {
  resolve_hamiltonian(run);
  const ValueField vf = solve_and_report(run, dir);
  save_value_field(dir.output("value.rvvf"), vf);
  Json j;
  j["scenario"] = run.scenario.name;
  j["t0"] = vf.t0();
  j["T"] = vf.T();
  j["solver"] = stats_json(vf);
  if (run.has_x0) {
    const auto q = query_value_checked(vf, run.scenario.x0, vf.t0());
    j["x0"] = vec_json(run.scenario.x0);
    j["value_at_x0"] = q.value;
    j["x0_in_brt"] = q.value <= 0.0;
    if (q.clamped) dir.warn("x0 lies outside the grid; its value was clamped");
  }
  dir.write_text("summary.json", j.dump(2) + "\n");
  std::cout << "solved " << run.scenario.name << ": " << vf.stats.steps << " steps";
  if (run.has_x0) std::cout << ", V(x0) = " << j["value_at_x0"].get<double>();
  std::cout << '\n';
  return kOk;
}

int cmd_bounds(RunConfig& run, RunDir& dir) {
  const Scenario& s = run.scenario;
  std::optional<DarkTimeAxis> axis;
  if (s.model.error.time_varying()) {
    const double t_max = run.bounds.dark_time_max > 0.0 ? run.bounds.dark_time_max : s.solve.T - s.solve.t0;
    const std::size_t steps =
        run.bounds.dark_time_steps > 0 ? run.bounds.dark_time_steps : run.hamiltonian.dark_samples;
    axis = DarkTimeAxis{t_max, steps};
  }
  const ControlBoundsField field = build_bounds_field(s.model, s.grid, axis);
  export_bounds(field, dir.output("bounds.rvcb"));
  Json j;
  j["cells"] = field.grid().size();
  j["dark_samples"] = field.dark_samples();
  j["max_magnitude"] = vec_json(field.max_magnitude());
  dir.write_text("summary.json", j.dump(2) + "\n");
  std::cout << "bounds: " << field.grid().size() << " cells\n";
  return kOk;
}

int cmd_sweep(RunConfig& run, RunDir& dir) {
  const Scenario& s = run.scenario;
  if (!std::holds_alternative<TanProportional>(s.model.controller.model())) {
    throw ConfigError("config error at /controller: sweep needs a tan_proportional controller");
  }
  const SmallVec x0 = require_x0(run);
  SolveConfig cfg = s.solve;
  cfg.hamiltonian = ExactTanProportional{};
  const SweepResult r =
      sweep_hyperparameters(s.model, run.sweep.a.values(), run.sweep.b.values(), s.failure, s.grid, cfg, x0);
  dir.write_stream("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, r); });
  Json j;
  j["cells"] = r.values.size();
  j["failed_cells"] = r.failures.size();
  if (r.has_best) {
    j["best"] = {{"a", r.a_values[r.best_a]}, {"b", r.b_values[r.best_b]}, {"value", r.at(r.best_a, r.best_b)}};
  }
  for (const auto& f : r.failures) {
    dir.warn("sweep cell (" + std::to_string(f.a_index) + ", " + std::to_string(f.b_index) + ") failed: " + f.message);
  }
  dir.write_text("summary.json", j.dump(2) + "\n");
  std::cout << "sweep: " << r.values.size() << " cells";
  if (r.has_best) std::cout << ", best V(x0) = " << r.at(r.best_a, r.best_b);
  std::cout << '\n';
  return kOk;
}

double budget_horizon(const RunConfig& run) {
  return run.budget.horizon > 0.0 ? run.budget.horizon : run.scenario.solve.T - run.scenario.solve.t0;
}

struct BudgetArtifacts {
  DarkBudgetField budget;
  ValueField zero;
};

BudgetArtifacts compute_budget(RunConfig& run, RunDir& dir) {
  resolve_hamiltonian(run);
  const double horizon = budget_horizon(run);
  if (!(horizon > 0.0)) throw ConfigError("config error at /budget/horizon: must be > 0");
  Scenario zero = rover_zero_uncertainty(run.scenario);
  zero.solve.t0 = 0.0;
  zero.solve.T = horizon;
  ValueField zvf = solve(zero.model, zero.failure, zero.grid, zero.solve);
  dir.warn_all(zvf.warnings);
  DarkBudgetResult r = synthesize_dark_budget(run.scenario.model, zvf, horizon, run.scenario.solve);
  dir.warn_all(r.growing.warnings);
  return {std::move(r.budget), std::move(zvf)};
}

void write_budget_outputs(const RunConfig& run, RunDir& dir, const BudgetArtifacts& b) {
  save_dark_budget(dir.output("budget.rvdb"), b.budget);
  save_value_field(dir.output("zero_value.rvvf"), b.zero);
  const SmallVec* pin = run.has_x0 ? &run.scenario.x0 : nullptr;
  const Grid& g = b.budget.grid();
  if (g.dims() < 2) return;
  dir.write_stream("budget_slice.csv",
                   [&](std::ostream& os) { write_slice_csv(os, b.budget.as_field(), 0, 1, pin_at(g, pin)); });
}

int cmd_budget(RunConfig& run, RunDir& dir) {
  const BudgetArtifacts b = compute_budget(run, dir);
  write_budget_outputs(run, dir, b);
  const auto tau = b.budget.tau_star();
  const auto positive = std::count_if(tau.begin(), tau.end(), [](double t) { return t > 0.0; });
  Json j;
  j["horizon"] = b.budget.horizon();
  j["nodes"] = tau.size();
  j["nodes_with_budget"] = positive;
  j["max_budget"] = tau.empty() ? 0.0 : *std::max_element(tau.begin(), tau.end());
  if (run.has_x0) j["budget_at_x0"] = b.budget.at(run.scenario.x0);
  dir.write_text("summary.json", j.dump(2) + "\n");
  std::cout << "budget: " << positive << " of " << tau.size() << " nodes may go dark\n";
  return kOk;
}

int cmd_rollout(RunConfig& run, RunDir& dir, const std::string& value_path) {
  resolve_hamiltonian(run);
  const Scenario& s = run.scenario;
  const SmallVec x0 = require_x0(run);
  const ValueField vf = value_path.empty() ? solve_and_report(run, dir) : load_value_field(value_path);
  if (!(vf.grid() == s.grid)) throw ConfigError("value field grid differs from the configured grid");
  const auto started = Clock::now();
  RolloutOptions opts;
  opts.hamiltonian = s.solve.hamiltonian;
  opts.dt = run.rollout.dt;
  const Trajectory tr = worst_case_rollout(vf, s.model, s.failure, x0, vf.t0(), opts);
  const double secs = std::chrono::duration<double>(Clock::now() - started).count();
  dir.write_stream("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, tr); });
  Json j = Json::parse(trajectory_summary_json(tr, secs));
  j["value_at_x0"] = query_value(vf, x0, vf.t0());
  dir.write_text("summary.json", j.dump(2) + "\n");
  if (tr.exited_grid) dir.warn("rollout left the grid before the horizon");
  std::cout << "rollout: min_l = " << tr.min_l << (tr.violated() ? " (failure reached)" : "") << '\n';
  return kOk;
}

int cmd_mc(RunConfig& run, RunDir& dir) {
  const Scenario& s = run.scenario;
  const SmallVec x0 = require_x0(run);
  MonteCarloOptions opts;
  opts.samples = run.mc.samples;
  opts.seed = run.seed;
  opts.dt = run.mc.dt;
  if (opts.dt == 0.0) {
    resolve_hamiltonian(run);
    opts.dt = plan_time_step(s.model, s.grid, s.solve).dt;
    if (!(opts.dt > 0.0)) throw ConfigError("config error at /mc/dt: the solve horizon is empty; set a step");
  }
  const MonteCarloResult r = monte_carlo(s.model, s.failure, x0, s.solve.t0, s.solve.T, opts);
  dir.write_stream("running_min.csv", [&](std::ostream& os) {
    os << "samples,running_min\n";
    for (std::size_t k = 0; k < r.running_min.size(); ++k) {
      os << k + 1 << ',' << format_double(r.running_min[k]) << '\n';
    }
  });
  const Trajectory worst = monte_carlo_sample(s.model, s.failure, x0, s.solve.t0, s.solve.T, opts, r.worst_sample);
  dir.write_stream("worst_trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, worst); });
  Json j;
  j["value"] = r.value;
  j["samples"] = opts.samples;
  j["seed"] = opts.seed;
  j["dt"] = opts.dt;
  j["worst_sample"] = r.worst_sample;
  j["violated"] = r.value <= 0.0;
  dir.write_text("summary.json", j.dump(2) + "\n");
  std::cout << "mc: min l over " << opts.samples << " samples = " << r.value << '\n';
  return kOk;
}

std::vector<SmallVec> sample_starts(const RunConfig& run, const DarkBudgetField& budget, RunDir& dir) {
  if (!run.policy.explicit_starts.empty()) return run.policy.explicit_starts;
  const Grid& g = run.scenario.grid;
  std::mt19937_64 rng(run.seed);
  std::vector<std::uniform_real_distribution<double>> dists;
  for (std::size_t d = 0; d < g.dims(); ++d) {
    const double pad = g.periodic(d) ? 0.0 : g.spacing(d);
    dists.emplace_back(g.lo(d) + pad, g.hi(d) - pad);
  }
  std::vector<SmallVec> starts;
  const std::size_t max_tries = 1000 * run.policy.starts;
  for (std::size_t tries = 0; tries < max_tries && starts.size() < run.policy.starts; ++tries) {
    SmallVec x(g.dims());
    for (std::size_t d = 0; d < g.dims(); ++d) x[d] = dists[d](rng);
    if (budget.at(x) > 0.0) starts.push_back(x);
  }
  if (starts.size() < run.policy.starts) {
    dir.warn("found only " + std::to_string(starts.size()) + " starts with a positive dark budget");
  }
  return starts;
}

int cmd_policy_check(RunConfig& run, RunDir& dir, const std::string& budget_dir, bool assert_safe) {
  std::optional<BudgetArtifacts> b;
  if (budget_dir.empty()) {
    b = compute_budget(run, dir);
    write_budget_outputs(run, dir, *b);
  } else {
    resolve_hamiltonian(run);
    const std::filesystem::path d = budget_dir;
    b = BudgetArtifacts{load_dark_budget(d / "budget.rvdb"), load_value_field(d / "zero_value.rvvf")};
  }
  const Scenario& s = run.scenario;
  if (!(b->budget.grid() == s.grid)) throw ConfigError("dark budget grid differs from the configured grid");
  PolicyRolloutOptions opts;
  opts.horizon = b->budget.horizon();
  opts.margin = run.policy.margin;
  opts.hamiltonian = s.solve.hamiltonian;
  SolveConfig plan_cfg = s.solve;
  plan_cfg.t0 = 0.0;
  plan_cfg.T = opts.horizon;
  opts.dt = plan_time_step(s.model, s.grid, plan_cfg).dt;

  const std::vector<SmallVec> starts = sample_starts(run, b->budget, dir);
  Json rows = Json::array();
  std::size_t unsafe = 0;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const Trajectory tr = policy_rollout(b->budget, b->zero, s.model, s.failure, starts[k], opts);
    dir.write_stream("policy_" + std::to_string(k) + ".csv", [&](std::ostream& os) { write_trajectory_csv(os, tr); });
    unsafe += tr.violated() ? 1 : 0;
    rows.push_back({{"x0", vec_json(starts[k])},
                    {"budget", b->budget.at(starts[k])},
                    {"min_l", tr.min_l},
                    {"violated", tr.violated()},
                    {"light_activations", tr.light_activations()},
                    {"exited_grid", tr.exited_grid}});
  }
  Json j;
  j["starts"] = starts.size();
  j["violations"] = unsafe;
  j["margin"] = opts.margin > 0.0 ? opts.margin : 2.0 * opts.dt;
  j["dt"] = opts.dt;
  j["rollouts"] = rows;
  dir.write_text("summary.json", j.dump(2) + "\n");
  std::cout << "policy-check: " << unsafe << " of " << starts.size() << " rollouts reached the failure set\n";
  return assert_safe && unsafe > 0 ? kUnsafe : kOk;
}

std::size_t dim_from_name(const std::string& name, std::size_t dims) {
  static const std::vector<std::pair<std::string, std::size_t>> aliases{
      {"x", 0}, {"px", 0}, {"p_x", 0}, {"y", 1}, {"py", 1}, {"p_y", 1}, {"theta", 2}, {"th", 2}, {"θ", 2}};
  std::size_t d = dims;
  if (!name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) { return std::isdigit(c); })) {
    d = std::stoul(name);
  } else {
    for (const auto& [alias, idx] : aliases) {
      if (alias == name) d = idx;
    }
  }
  if (d >= dims) throw ConfigError("--dim '" + name + "' does not name one of the field's " + std::to_string(dims) + " dims");
  return d;
}

int cmd_export_slice(RunDir& dir, const std::string& field_path, const std::vector<std::string>& dims,
                     const std::vector<double>& at, std::optional<double> time, Json& echo) {
  if (field_path.empty()) throw ConfigError("export-slice needs --field");
  const std::string head = read_file(field_path).substr(0, 4);
  ScalarField field;
  std::optional<double> slice_time;
  if (head == "RVCF") {
    field = load_field(field_path);
  } else if (head == "RVVF") {
    const ValueField vf = load_value_field(field_path);
    const double t = time.value_or(vf.t0());
    std::size_t best = 0;
    for (std::size_t k = 1; k < vf.times().size(); ++k) {
      if (std::abs(vf.times()[k] - t) < std::abs(vf.times()[best] - t)) best = k;
    }
    field = vf.slices()[best];
    slice_time = vf.times()[best];
  } else if (head == "RVDB") {
    field = load_dark_budget(field_path).as_field();
  } else {
    throw ConfigError("--field " + field_path + " is not a field, value field or dark budget");
  }
  const Grid& g = field.grid();
  if (dims.size() != at.size()) throw ConfigError("every --dim needs a matching --at");
  if (g.dims() < 2) throw ConfigError("export-slice needs a field with at least 2 dims");
  if (dims.size() + 2 != g.dims()) {
    throw ConfigError("pin " + std::to_string(g.dims() - 2) + " dims with --dim/--at to leave a 2-D slice");
  }
  std::vector<std::size_t> index(g.dims(), 0);
  std::vector<bool> pinned(g.dims(), false);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const std::size_t d = dim_from_name(dims[k], g.dims());
    if (pinned[d]) throw ConfigError("--dim " + dims[k] + " given twice");
    pinned[d] = true;
    index[d] = g.nearest_index(d, g.wrap(d, at[k]));
  }
  std::vector<std::size_t> free;
  for (std::size_t d = 0; d < g.dims(); ++d) {
    if (!pinned[d]) free.push_back(d);
  }
  dir.write_stream("slice.csv", [&](std::ostream& os) { write_slice_csv(os, field, free[0], free[1], index); });
  Json j;
  j["field"] = field_path;
  j["dims"] = free;
  Json pins = Json::array();
  for (std::size_t d = 0; d < g.dims(); ++d) {
    if (pinned[d]) pins.push_back({{"dim", d}, {"index", index[d]}, {"coordinate", g.coordinate(d, index[d])}});
  }
  j["pinned"] = pins;
  if (slice_time) j["time"] = *slice_time;
  dir.write_text("summary.json", j.dump(2) + "\n");
  echo = j;
  return kOk;
}

int cmd_export_table(RunConfig& run, RunDir& dir) {
  const auto* table = std::get_if<Tabulated>(&run.scenario.model.controller.model());
  if (!table) throw ConfigError("config error at /controller: export-table needs a tabulated controller");
  save_table(dir.output("table.rvct"), *table);
  const Grid& g = table->grid;
  dir.write_stream("table.csv", [&](std::ostream& os) {
    for (std::size_t d = 0; d < g.dims(); ++d) os << 'x' << d << ',';
    for (std::size_t c = 0; c < table->control_dims; ++c) os << 'u' << c << (c + 1 < table->control_dims ? "," : "\n");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const SmallVec x = g.point(i);
      for (std::size_t d = 0; d < g.dims(); ++d) os << format_double(x[d]) << ',';
      for (std::size_t c = 0; c < table->control_dims; ++c) {
        os << format_double(table->table[i * table->control_dims + c]) << (c + 1 < table->control_dims ? "," : "\n");
      }
    }
  });
  std::cout << "export-table: " << g.size() << " rows\n";
  return kOk;
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

int run(const std::vector<std::string>& args) {
  const auto started = Clock::now();
  CLI::App app{"Robust reachability for perception-based closed-loop control"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = "run", preset, controller;
  std::optional<std::size_t> coverage_index;
  bool full = false;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::vector<double> x0;
  std::optional<double> t0, tf, cfl;
  std::string model_path, failure_path, grid_path;
  app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-o,--out", out_dir, "Run directory for outputs and manifest.json");
  app.add_option("--preset", preset, "taxiing or rover");
  app.add_option("--coverage-index", coverage_index, "Taxiing error-box rung");
  app.add_option("--controller", controller, "Rover controller: mpc or mlp");
  app.add_flag("--full", full, "Use the full-resolution preset grid");
  app.add_option("--workers", workers, "Worker threads (default: PERCREACH_WORKERS or all cores)");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--x0", x0, "Initial state")->delimiter(',');
  app.add_option("--t0", t0, "Initial time");
  app.add_option("--T", tf, "Final time");
  app.add_option("--cfl", cfl, "CFL safety factor in (0, 1]");
  app.add_option("--model", model_path, "JSON file with dynamics, controller, error and angle_dims")
      ->check(CLI::ExistingFile);
  app.add_option("--failure", failure_path, "JSON file with the failure section")->check(CLI::ExistingFile);
  app.add_option("--grid", grid_path, "JSON file with the grid section")->check(CLI::ExistingFile);

  auto* solve_cmd = app.add_subcommand("solve", "Solve the value field");
  auto* bounds_cmd = app.add_subcommand("bounds", "Export per-cell control bounds");
  std::optional<std::size_t> dark_steps;
  std::optional<double> dark_max;
  bounds_cmd->add_option("--dark-time-steps", dark_steps, "Dark-time samples for growing error boxes");
  bounds_cmd->add_option("--dark-time-max", dark_max, "Last dark-time sample in seconds (default: horizon)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Gain sweep of a tan-proportional controller");
  std::vector<double> a_range, b_range;
  sweep_cmd->add_option("--a", a_range, "lo,hi,count for gain a")->delimiter(',')->expected(3);
  sweep_cmd->add_option("--b", b_range, "lo,hi,count for gain b")->delimiter(',')->expected(3);

  auto* budget_cmd = app.add_subcommand("budget", "Synthesize the dark-budget field");
  std::optional<double> horizon;
  budget_cmd->add_option("--horizon", horizon, "Dark-budget horizon in seconds");

  auto* rollout_cmd = app.add_subcommand("rollout", "Worst-case rollout from x0");
  std::string value_path;
  std::optional<double> rollout_dt;
  rollout_cmd->add_option("--value", value_path, "Reuse a solved value field")->check(CLI::ExistingFile);
  rollout_cmd->add_option("--dt", rollout_dt, "Rollout step (default: solver step)");

  auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo baseline from x0");
  std::optional<std::size_t> samples;
  std::optional<double> mc_dt;
  mc_cmd->add_option("--samples", samples, "Sample count");
  mc_cmd->add_option("--dt", mc_dt, "Rollout step (default: solver step)");

  auto* policy_cmd = app.add_subcommand("policy-check", "Rollouts under the light-activation policy");
  std::string budget_dir;
  std::optional<std::size_t> starts;
  std::optional<double> margin;
  bool assert_safe = false;
  policy_cmd->add_option("--budget-dir", budget_dir, "Run directory of an earlier budget run")->check(CLI::ExistingDirectory);
  policy_cmd->add_option("--starts", starts, "Number of sampled starts");
  policy_cmd->add_option("--margin", margin, "Switch-on margin in seconds");
  policy_cmd->add_flag("--assert-safe", assert_safe, "Exit 1 if any rollout reaches the failure set");

  auto* slice_cmd = app.add_subcommand("export-slice", "Export a 2-D slice of a stored field as CSV");
  std::string field_path;
  std::vector<std::string> slice_dims;
  std::vector<double> slice_at;
  std::optional<double> slice_time;
  slice_cmd->add_option("--field", field_path, "RVCF, RVVF or RVDB file")->required()->check(CLI::ExistingFile);
  slice_cmd->add_option("--dim", slice_dims, "Dim to pin (index or px, py, theta)")->take_all();
  slice_cmd->add_option("--at", slice_at, "Coordinate for the matching --dim")->take_all();
  slice_cmd->add_option("--time", slice_time, "Time of the value slice (default: t0)");

  auto* table_cmd = app.add_subcommand("export-table", "Export a tabulated controller as CSV and RVCT");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (workers) {
      if (*workers < 1) throw ConfigError("--workers must be >= 1");
      set_worker_count(*workers);
    }
    RunDir dir(out_dir);
    if (sub == slice_cmd) {
      Json echo;
      const int code = cmd_export_slice(dir, field_path, slice_dims, slice_at, slice_time, echo);
      dir.write_manifest(name, echo, code, std::chrono::duration<double>(Clock::now() - started).count());
      return code;
    }

    Json doc = Json::object();
    std::filesystem::path base = std::filesystem::current_path();
    if (!config_path.empty()) {
      doc = read_config_file(config_path);
      base = std::filesystem::absolute(config_path).parent_path();
    }
    if (!preset.empty()) {
      if (!doc.contains("preset") || !doc["preset"].is_object() || doc["preset"].value("name", "") != preset) {
        doc["preset"] = Json::object();
      }
      doc["preset"]["name"] = preset;
    }
    if (coverage_index || !controller.empty() || full) {
      if (!doc.contains("preset")) throw ConfigError("--coverage-index, --controller and --full need a preset");
      if (coverage_index) doc["preset"]["coverage_index"] = *coverage_index;
      if (!controller.empty()) doc["preset"]["controller"] = controller;
      if (full) doc["preset"]["full"] = true;
    }
    // Section files replace the matching sections; paths inside them resolve
    // against the config file's directory.
    if (!model_path.empty()) {
      const Json m = read_config_file(model_path);
      if (!m.is_object()) throw ConfigError("--model file must hold a JSON object");
      for (const auto& [key, value] : m.items()) doc[key] = value;
    }
    if (!failure_path.empty()) doc["failure"] = read_config_file(failure_path);
    if (!grid_path.empty()) doc["grid"] = read_config_file(grid_path);
    if (doc.empty()) throw ConfigError("nothing to run: pass --config, --preset or --model");
    if (!x0.empty()) doc["x0"] = x0;
    if (t0) doc["solve"]["t0"] = *t0;
    if (tf) doc["solve"]["T"] = *tf;
    if (seed) doc["seed"] = *seed;
    if (workers) doc["workers"] = *workers;
    if (samples) doc["mc"]["samples"] = *samples;
    if (mc_dt) doc["mc"]["dt"] = *mc_dt;
    if (rollout_dt) doc["rollout"]["dt"] = *rollout_dt;
    if (horizon) doc["budget"]["horizon"] = *horizon;
    if (starts) doc["policy"]["starts"] = *starts;
    if (margin) doc["policy"]["margin"] = *margin;
    if (a_range.size() == 3) doc["sweep"]["a"] = {{"lo", a_range[0]}, {"hi", a_range[1]}, {"count", a_range[2]}};
    if (b_range.size() == 3) doc["sweep"]["b"] = {{"lo", b_range[0]}, {"hi", b_range[1]}, {"count", b_range[2]}};
    if (dark_steps) doc["bounds"]["dark_time_steps"] = *dark_steps;
    if (dark_max) doc["bounds"]["dark_time_max"] = *dark_max;
    if (cfl) doc["solve"]["cfl"] = *cfl;
    // Counts arrive as doubles from the --a/--b lists.
    for (const char* axis : {"a", "b"}) {
      if (doc.contains("sweep") && doc["sweep"].contains(axis)) {
        auto& c = doc["sweep"][axis]["count"];
        if (c.is_number_float() && c.get<double>() >= 0 && c.get<double>() == std::floor(c.get<double>())) {
          c = static_cast<std::uint64_t>(c.get<double>());
        }
      }
    }

    RunConfig rc = build_run_config(doc, base);
    if (rc.workers > 0) set_worker_count(rc.workers);

    int code = kOk;
    if (sub == solve_cmd) code = cmd_solve(rc, dir);
    else if (sub == bounds_cmd) code = cmd_bounds(rc, dir);
    else if (sub == sweep_cmd) code = cmd_sweep(rc, dir);
    else if (sub == budget_cmd) code = cmd_budget(rc, dir);
    else if (sub == rollout_cmd) code = cmd_rollout(rc, dir, value_path);
    else if (sub == mc_cmd) code = cmd_mc(rc, dir);
    else if (sub == policy_cmd) code = cmd_policy_check(rc, dir, budget_dir, assert_safe);
    else if (sub == table_cmd) code = cmd_export_table(rc, dir);
    dir.write_manifest(name, rc.echo, code, std::chrono::duration<double>(Clock::now() - started).count());
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "percreach " << name << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const ArgumentError& e) {
    std::cerr << "percreach " << name << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const FormatError& e) {
    std::cerr << "percreach " << name << ": " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "percreach " << name << ": internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace percreach::cli
