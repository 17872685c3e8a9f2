#include "config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include "percreach/bounds.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"

namespace percreach::cli {

namespace {

std::string escape_pointer_token(std::string_view key) {
  std::string out;
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

// A JSON value plus its pointer, for error messages.
class Node {
 public:
  Node(const Json& j, std::string ptr) : j_(&j), ptr_(std::move(ptr)) {}

  const std::string& pointer() const { return ptr_; }
  const Json& json() const { return *j_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config error at " + (ptr_.empty() ? std::string("/") : ptr_) + ": " + msg);
  }

  void expect_object(std::initializer_list<std::string_view> allowed) const {
    if (!j_->is_object()) fail("expected an object");
    for (const auto& [key, value] : j_->items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == key;
      if (!ok) Node(value, ptr_ + "/" + escape_pointer_token(key)).fail("unknown key");
    }
  }

  std::optional<Node> find(std::string_view key) const {
    auto it = j_->find(std::string(key));
    if (it == j_->end()) return std::nullopt;
    return Node(*it, ptr_ + "/" + escape_pointer_token(key));
  }

  Node at(std::string_view key) const {
    auto n = find(key);
    if (!n) Node(*j_, ptr_ + "/" + escape_pointer_token(key)).fail("missing required key");
    return *n;
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  std::uint64_t unsigned_int() const {
    if (!j_->is_number_integer() || (j_->is_number_integer() && !j_->is_number_unsigned() && j_->get<long long>() < 0)) {
      fail("expected a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  std::vector<Node> items() const {
    if (!j_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) out.emplace_back((*j_)[i], ptr_ + "/" + std::to_string(i));
    return out;
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (const auto& n : items()) out.push_back(n.number());
    return out;
  }

  Eigen::MatrixXd matrix() const {
    const auto rows = items();
    if (rows.empty()) fail("expected a non-empty matrix");
    const auto first = rows[0].numbers();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(first.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = rows[r].numbers();
      if (row.size() != first.size()) rows[r].fail("rows must have equal length");
      for (std::size_t c = 0; c < row.size(); ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
    return m;
  }

 private:
  const Json* j_;
  std::string ptr_;
};

// Runs f and re-throws library errors tagged with the node's pointer.
template <class F>
auto guarded(const Node& n, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    if (std::string_view(e.what()).starts_with("config error at ")) throw;
    n.fail(e.what());
  } catch (const ArgumentError& e) {
    n.fail(e.what());
  } catch (const FormatError& e) {
    n.fail(e.what());
  }
}

std::filesystem::path resolve_path(const Node& n, const std::filesystem::path& base) {
  std::filesystem::path p = n.string();
  if (p.empty()) n.fail("empty path");
  return p.is_absolute() ? p : base / p;
}

Grid parse_grid(const Node& n) {
  n.expect_object({"lo", "hi", "shape", "periodic"});
  const auto lo = n.at("lo").numbers();
  const auto hi = n.at("hi").numbers();
  std::vector<std::size_t> shape;
  for (const auto& s : n.at("shape").items()) shape.push_back(static_cast<std::size_t>(s.unsigned_int()));
  std::vector<bool> periodic(lo.size(), false);
  if (auto p = n.find("periodic")) {
    periodic.clear();
    for (const auto& b : p->items()) periodic.push_back(b.boolean());
  }
  return guarded(n, [&] { return Grid(lo, hi, shape, periodic); });
}

Dynamics parse_dynamics(const Node& n) {
  if (!n.json().is_object()) n.fail("expected an object");
  const std::string type = n.at("type").string();
  if (type == "dubins3d") {
    n.expect_object({"type", "speed"});
    return Dynamics::dubins3d(n.at("speed").number());
  }
  if (type == "linear") {
    n.expect_object({"type", "A", "B", "E", "disturbance"});
    Eigen::MatrixXd e;
    Box box;
    if (auto en = n.find("E")) e = en->matrix();
    if (auto dn = n.find("disturbance")) {
      dn->expect_object({"lo", "hi"});
      box = Box{SmallVec(dn->at("lo").numbers()), SmallVec(dn->at("hi").numbers())};
    }
    return guarded(n, [&] { return Dynamics::linear(n.at("A").matrix(), n.at("B").matrix(), e, box); });
  }
  n.at("type").fail("unknown dynamics type '" + type + "' (expected dubins3d or linear)");
}

Controller parse_controller(const Node& n, std::size_t state_dims, const Grid& grid,
                            const std::filesystem::path& base) {
  if (!n.json().is_object()) n.fail("expected an object");
  const std::string type = n.at("type").string();
  Controller::Model model;
  if (type == "tan_proportional") {
    n.expect_object({"type", "a", "b", "position_dim", "heading_dim"});
    TanProportional t{n.at("a").number(), n.at("b").number(), 0, 2};
    if (auto p = n.find("position_dim")) t.position_dim = p->unsigned_int();
    if (auto h = n.find("heading_dim")) t.heading_dim = h->unsigned_int();
    model = t;
  } else if (type == "linear_feedback") {
    n.expect_object({"type", "gain", "offset"});
    LinearFeedback lf{n.at("gain").matrix(), {}};
    if (auto o = n.find("offset")) {
      const auto v = o->numbers();
      lf.offset = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    } else {
      lf.offset = Eigen::VectorXd::Zero(lf.gain.rows());
    }
    model = lf;
  } else if (type == "table") {
    n.expect_object({"type", "path"});
    const auto path = resolve_path(n.at("path"), base);
    model = guarded(n.at("path"), [&] { return load_table(path); });
  } else if (type == "mlp") {
    n.expect_object({"type", "path"});
    const auto path = resolve_path(n.at("path"), base);
    model = guarded(n.at("path"), [&] { return load_mlp(path); });
  } else if (type == "rover_mpc") {
    n.expect_object({"type"});
    if (grid.dims() != 3) n.fail("rover_mpc needs a 3-D grid");
    model = rover_mpc_table(grid);
  } else {
    n.at("type").fail("unknown controller type '" + type +
                      "' (expected tan_proportional, linear_feedback, table, mlp or rover_mpc)");
  }
  return guarded(n, [&] { return Controller(std::move(model), state_dims); });
}

ErrorBound parse_error(const Node& n) {
  if (!n.json().is_object()) n.fail("expected an object");
  const std::string mode = n.at("mode").string();
  if (mode == "static") {
    n.expect_object({"mode", "half_widths"});
    return guarded(n, [&] { return ErrorBound::static_box(SmallVec(n.at("half_widths").numbers())); });
  }
  if (mode == "linear_growth") {
    n.expect_object({"mode", "rates"});
    return guarded(n, [&] { return ErrorBound::linear_growth(SmallVec(n.at("rates").numbers())); });
  }
  n.at("mode").fail("unknown error mode '" + mode + "' (expected static or linear_growth)");
}

FailureSpec parse_failure(const Node& n, const Grid& grid, const std::filesystem::path& base) {
  if (!n.json().is_object()) n.fail("expected an object");
  const std::string type = n.at("type").string();
  if (type == "slab") {
    n.expect_object({"type", "dim", "magnitude"});
    const SlabKeepout s{n.at("dim").unsigned_int(), n.at("magnitude").number()};
    return guarded(n, [&] { return FailureSpec(s); });
  }
  if (type == "circles") {
    n.expect_object({"type", "centers", "radii", "dim_x", "dim_y"});
    CircularObstacles c;
    for (const auto& cn : n.at("centers").items()) {
      const auto xy = cn.numbers();
      if (xy.size() != 2) cn.fail("each center needs 2 coordinates");
      c.centers.push_back({xy[0], xy[1]});
    }
    c.radii = n.at("radii").numbers();
    if (c.radii.size() != c.centers.size()) n.at("radii").fail("needs one radius per center");
    if (auto d = n.find("dim_x")) c.dim_x = d->unsigned_int();
    if (auto d = n.find("dim_y")) c.dim_y = d->unsigned_int();
    return guarded(n, [&] { return FailureSpec(c); });
  }
  if (type == "affine") {
    // Sampled onto the grid as an imported field.
    n.expect_object({"type", "weights", "offset"});
    const auto w = n.at("weights").numbers();
    if (w.size() != grid.dims()) n.at("weights").fail("needs one weight per grid dim");
    const double offset = n.find("offset") ? n.at("offset").number() : 0.0;
    std::vector<double> values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const SmallVec x = grid.point(i);
      double v = offset;
      for (std::size_t d = 0; d < w.size(); ++d) v += w[d] * x[d];
      values[i] = v;
    }
    return FailureSpec(ImportedField{ScalarField(grid, std::move(values))});
  }
  if (type == "field") {
    n.expect_object({"type", "path"});
    const auto path = resolve_path(n.at("path"), base);
    return guarded(n.at("path"), [&] { return FailureSpec(ImportedField{load_field(path)}); });
  }
  n.at("type").fail("unknown failure type '" + type + "' (expected slab, circles, affine or field)");
}

HamiltonianChoice parse_hamiltonian(const Node& n, const std::filesystem::path& base) {
  n.expect_object({"type", "error_quantum", "cell_margin", "path", "dark_samples"});
  HamiltonianChoice h;
  const std::string type = n.at("type").string();
  using K = HamiltonianChoice::Kind;
  if (type == "auto") {
    h.kind = K::kAuto;
  } else if (type == "exact_tan") {
    h.kind = K::kExactTan;
  } else if (type == "exact_linear") {
    h.kind = K::kExactLinear;
  } else if (type == "enumerated") {
    h.kind = K::kEnumerated;
  } else if (type == "bounds") {
    h.kind = K::kBounds;
  } else {
    n.at("type").fail("unknown hamiltonian '" + type + "' (expected auto, exact_tan, exact_linear, enumerated or bounds)");
  }
  if (auto q = n.find("error_quantum")) {
    h.error_quantum = q->number();
    if (!(h.error_quantum > 0.0)) q->fail("must be > 0");
  }
  if (auto m = n.find("cell_margin")) {
    h.cell_margin = m->number();
    if (!(h.cell_margin >= 0.0)) m->fail("must be >= 0");
  }
  if (auto p = n.find("path")) {
    if (h.kind != K::kBounds) p->fail("only the bounds hamiltonian takes a path");
    h.bounds_path = resolve_path(*p, base);
  }
  if (auto d = n.find("dark_samples")) {
    h.dark_samples = d->unsigned_int();
    if (h.dark_samples < 3) d->fail("must be at least 3");
  }
  return h;
}

void parse_solve(const Node& n, SolveConfig& cfg, HamiltonianChoice& h, const std::filesystem::path& base) {
  n.expect_object({"t0", "T", "cfl", "save_stride", "memory_cap_mib", "boundary", "hamiltonian"});
  if (auto v = n.find("t0")) cfg.t0 = v->number();
  if (auto v = n.find("T")) cfg.T = v->number();
  if (auto v = n.find("cfl")) {
    cfg.cfl = v->number();
    if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) v->fail("cfl must lie in (0, 1]");
  }
  if (auto v = n.find("save_stride")) cfg.save_stride = v->unsigned_int();
  if (auto v = n.find("memory_cap_mib")) {
    const auto mib = v->unsigned_int();
    if (mib == 0 || mib > (std::uint64_t{1} << 30)) v->fail("must lie in [1, 2^30]");
    cfg.memory_cap_bytes = static_cast<std::size_t>(mib) << 20;
  }
  if (auto v = n.find("boundary")) {
    const std::string rule = v->string();
    if (rule == "extrapolate") {
      cfg.boundary = BoundaryRule::kExtrapolate;
    } else if (rule == "zero_gradient") {
      cfg.boundary = BoundaryRule::kZeroGradient;
    } else {
      v->fail("unknown boundary rule '" + rule + "' (expected extrapolate or zero_gradient)");
    }
  }
  if (cfg.T < cfg.t0) n.fail("T must be >= t0");
  if (auto v = n.find("hamiltonian")) h = parse_hamiltonian(*v, base);
}

AxisRange parse_range(const Node& n) {
  n.expect_object({"lo", "hi", "count"});
  AxisRange r{n.at("lo").number(), n.at("hi").number(), n.at("count").unsigned_int()};
  if (r.count == 0) n.at("count").fail("must be >= 1");
  if (r.count > 1 && !(r.lo < r.hi)) n.fail("lo must be below hi");
  return r;
}

SmallVec parse_state(const Node& n, std::size_t dims) {
  const auto v = n.numbers();
  if (v.size() != dims) n.fail("expected " + std::to_string(dims) + " coordinates");
  return SmallVec(v);
}

}  // namespace

std::vector<double> AxisRange::values() const {
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  out.back() = hi;
  return out;
}

Json read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

RunConfig build_run_config(const Json& doc, const std::filesystem::path& base) {
  const Node root(doc, "");
  root.expect_object({"preset", "dynamics", "controller", "error", "angle_dims", "failure", "grid", "solve", "x0",
                      "seed", "workers", "sweep", "mc", "rollout", "budget", "policy", "bounds"});
  HamiltonianChoice hchoice;

  std::optional<Scenario> preset;
  if (auto p = root.find("preset")) {
    if (!p->json().is_object()) p->fail("expected an object");
    const std::string name = p->at("name").string();
    if (name == "taxiing") {
      p->expect_object({"name", "coverage_index", "full"});
      const std::size_t idx = p->find("coverage_index") ? p->at("coverage_index").unsigned_int() : 0;
      const bool full = p->find("full") ? p->at("full").boolean() : false;
      if (idx >= taxiing_ladder().size()) {
        p->at("coverage_index").fail("must be below " + std::to_string(taxiing_ladder().size()));
      }
      preset = preset_taxiing(idx, full);
    } else if (name == "rover") {
      p->expect_object({"name", "controller", "mlp_weights", "full"});
      const std::string ctrl = p->find("controller") ? p->at("controller").string() : "mpc";
      const bool full = p->find("full") ? p->at("full").boolean() : false;
      std::filesystem::path weights;
      if (auto w = p->find("mlp_weights")) weights = resolve_path(*w, base);
      if (ctrl == "mpc") {
        preset = preset_rover(RoverController::kMpc, full);
      } else if (ctrl == "mlp") {
        preset = guarded(*p, [&] { return preset_rover(RoverController::kMlp, full, weights); });
      } else {
        p->at("controller").fail("expected mpc or mlp");
      }
    } else {
      p->at("name").fail("unknown preset '" + name + "' (expected taxiing or rover)");
    }
  }

  // Grid first: a rover_mpc controller is tabulated on it.
  std::optional<Grid> grid;
  if (auto g = root.find("grid")) grid = parse_grid(*g);
  else if (preset) grid = preset->grid;
  else root.at("grid");

  std::optional<Dynamics> dyn;
  if (auto d = root.find("dynamics")) dyn = parse_dynamics(*d);
  else if (preset) dyn = preset->model.dynamics;
  else root.at("dynamics");
  const std::size_t dims = dyn->state_dims();
  if (grid->dims() != dims) {
    (root.find("grid") ? root.at("grid") : root).fail("grid has " + std::to_string(grid->dims()) +
                                                        " dims but the dynamics have " + std::to_string(dims));
  }

  std::optional<Controller> ctrl;
  if (auto c = root.find("controller")) ctrl = parse_controller(*c, dims, *grid, base);
  else if (preset) ctrl = preset->model.controller;
  else root.at("controller");
  if (ctrl->control_dims() != dyn->control_dims()) {
    (root.find("controller") ? root.at("controller") : root).fail("controller output has " +
                                                                    std::to_string(ctrl->control_dims()) +
                                                                    " dims but the dynamics take " +
                                                                    std::to_string(dyn->control_dims()));
  }

  std::optional<ErrorBound> err;
  if (auto e = root.find("error")) err = parse_error(*e);
  else if (preset) err = preset->model.error;
  else root.at("error");
  if (err->dims() != dims) {
    (root.find("error") ? root.at("error") : root).fail("error box needs " + std::to_string(dims) + " entries");
  }

  std::vector<std::size_t> angle_dims;
  if (auto a = root.find("angle_dims")) {
    for (const auto& k : a->items()) {
      const auto d = k.unsigned_int();
      if (d >= dims) k.fail("angle dim out of range");
      angle_dims.push_back(d);
    }
  } else if (preset) {
    angle_dims = preset->model.angle_dims;
  }

  std::optional<FailureSpec> failure;
  if (auto f = root.find("failure")) failure = parse_failure(*f, *grid, base);
  else if (preset) failure = preset->failure;
  else root.at("failure");

  SolveConfig cfg = preset ? preset->solve : SolveConfig{};
  // A new controller invalidates the preset's Hamiltonian.
  if (root.find("controller")) cfg.hamiltonian.reset();
  if (auto s = root.find("solve")) {
    parse_solve(*s, cfg, hchoice, base);
  } else if (!preset) {
    root.at("solve");
  }
  if (!preset && !root.at("solve").find("T")) root.at("solve").at("T");

  SmallVec x0 = preset ? preset->x0 : SmallVec{};
  bool has_x0 = preset.has_value();
  if (auto x = root.find("x0")) {
    x0 = parse_state(*x, dims);
    has_x0 = true;
  } else if (has_x0 && x0.size() != dims) {
    has_x0 = false;
  }

  RunConfig run(Scenario{preset ? preset->name : std::string("custom"),
                          ClosedLoopModel{*dyn, *ctrl, *err, angle_dims},
                          *failure,
                          *grid,
                          cfg,
                          x0});
  run.has_x0 = has_x0;
  run.hamiltonian = hchoice;
  run.echo = doc;

  if (auto s = root.find("seed")) run.seed = s->unsigned_int();
  if (auto w = root.find("workers")) {
    const auto v = w->unsigned_int();
    if (v > 4096) w->fail("must be at most 4096");
    run.workers = static_cast<int>(v);
  }
  if (auto s = root.find("sweep")) {
    s->expect_object({"a", "b"});
    if (auto a = s->find("a")) run.sweep.a = parse_range(*a);
    if (auto b = s->find("b")) run.sweep.b = parse_range(*b);
  }
  if (auto m = root.find("mc")) {
    m->expect_object({"samples", "dt"});
    if (auto v = m->find("samples")) {
      run.mc.samples = v->unsigned_int();
      if (run.mc.samples == 0) v->fail("must be >= 1");
    }
    if (auto v = m->find("dt")) {
      run.mc.dt = v->number();
      if (!(run.mc.dt >= 0.0)) v->fail("must be >= 0");
    }
  }
  if (auto r = root.find("rollout")) {
    r->expect_object({"dt"});
    if (auto v = r->find("dt")) {
      run.rollout.dt = v->number();
      if (!(run.rollout.dt >= 0.0)) v->fail("must be >= 0");
    }
  }
  if (auto b = root.find("budget")) {
    b->expect_object({"horizon"});
    if (auto v = b->find("horizon")) {
      run.budget.horizon = v->number();
      if (!(run.budget.horizon >= 0.0)) v->fail("must be >= 0");
    }
  }
  if (auto b = root.find("bounds")) {
    b->expect_object({"dark_time_max", "dark_time_steps"});
    if (auto v = b->find("dark_time_max")) {
      run.bounds.dark_time_max = v->number();
      if (!(run.bounds.dark_time_max > 0.0)) v->fail("must be > 0");
    }
    if (auto v = b->find("dark_time_steps")) {
      run.bounds.dark_time_steps = v->unsigned_int();
      if (run.bounds.dark_time_steps < 3) v->fail("must be at least 3");
    }
  }
  if (auto p = root.find("policy")) {
    p->expect_object({"starts", "margin"});
    if (auto v = p->find("starts")) {
      if (v->json().is_array()) {
        for (const auto& s : v->items()) run.policy.explicit_starts.push_back(parse_state(s, dims));
        run.policy.starts = run.policy.explicit_starts.size();
      } else {
        run.policy.starts = v->unsigned_int();
      }
      if (run.policy.starts == 0) v->fail("needs at least one start");
    }
    if (auto v = p->find("margin")) {
      run.policy.margin = v->number();
      if (!(run.policy.margin >= 0.0)) v->fail("must be >= 0");
    }
  }
  return run;
}

void resolve_hamiltonian(RunConfig& run) {
  Scenario& s = run.scenario;
  const HamiltonianChoice& h = run.hamiltonian;
  using K = HamiltonianChoice::Kind;
  switch (h.kind) {
    case K::kAuto:
      if (s.solve.hamiltonian) return;
      if (std::holds_alternative<Mlp>(s.model.controller.model())) {
        attach_interval_bounds(s, h.dark_samples);
      } else {
        s.solve.hamiltonian = default_hamiltonian(s.model);
      }
      return;
    case K::kExactTan:
      s.solve.hamiltonian = ExactTanProportional{};
      return;
    case K::kExactLinear:
      s.solve.hamiltonian = ExactLinearFeedback{};
      return;
    case K::kEnumerated:
      s.solve.hamiltonian = ExactEnumerated{h.error_quantum, h.cell_margin};
      return;
    case K::kBounds:
      if (h.bounds_path.empty()) {
        attach_interval_bounds(s, h.dark_samples);
      } else {
        s.solve.hamiltonian = IntervalBounded{std::make_shared<const ControlBoundsField>(import_bounds(h.bounds_path))};
      }
      return;
  }
}

}  // namespace percreach::cli
