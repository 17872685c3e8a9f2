#include <algorithm>
#include <cstring>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "percreach/binary_io.hpp"
#include "percreach/bounds.hpp"
#include "percreach/errors.hpp"
#include "percreach/field_io.hpp"
#include "support.hpp"

using namespace percreach;

namespace {

Tabulated line_table() {
  Tabulated t;
  t.grid = Grid({0.0}, {2.0}, {3}, {false});
  t.table = {0.0, 1.0, 2.0};
  t.control_lo = {0.0};
  t.control_hi = {2.0};
  return t;
}

Mlp random_mlp(testing::Gen& gen, const std::vector<int>& widths, Activation act) {
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weight = Eigen::MatrixXd::NullaryExpr(widths[l + 1], widths[l], [&] { return gen.uniform(-1.5, 1.5); });
    layer.bias = Eigen::VectorXd::NullaryExpr(widths[l + 1], [&] { return gen.uniform(-0.5, 0.5); });
    layer.activation = l + 2 < widths.size() ? act : Activation::kNone;
    net.layers.push_back(layer);
  }
  return net;
}

Tabulated random_table(testing::Gen& gen, const Grid& g, std::size_t cd) {
  Tabulated t;
  t.grid = g;
  t.control_dims = cd;
  t.control_lo = SmallVec(cd, -1.0);
  t.control_hi = SmallVec(cd, 1.0);
  t.table.resize(g.size() * cd);
  for (auto& v : t.table) v = gen.uniform(-1.0, 1.0);
  return t;
}

Eigen::VectorXd eig(const SmallVec& v) { return Eigen::Map<const Eigen::VectorXd>(v.begin(), Eigen::Index(v.size())); }

}  // namespace

TEST_SUITE("bounds") {
  TEST_CASE("enumeration examples") {
    const Tabulated t = line_table();
    const auto zero = bounds_by_enumeration(t, {1.3}, {0.0});
    CHECK(zero.lower[0] == 1.0);
    CHECK(zero.upper[0] == 1.0);
    const auto wide = bounds_by_enumeration(t, {1.0}, {0.6});
    CHECK(wide.lower[0] == 0.0);
    CHECK(wide.upper[0] == 2.0);
    const auto narrow = bounds_by_enumeration(t, {1.0}, {0.4});
    CHECK(narrow.lower[0] == 1.0);
    CHECK(narrow.upper[0] == 1.0);
    CHECK(enumerate_table(t, {1.0}, {0.4}).cells == std::vector<std::size_t>{1});
  }

  TEST_CASE("enumeration wraps periodic dims") {
    Tabulated t;
    t.grid = Grid({-std::numbers::pi}, {std::numbers::pi}, {4}, {true});
    t.table = {0.0, 1.0, 2.0, 3.0};
    t.control_lo = {0.0};
    t.control_hi = {3.0};
    // Nodes at -pi, -pi/2, 0, pi/2. [pi - 0.4, pi + 0.2] stays inside node 0's
    // wrapped region [3pi/4, 5pi/4].
    CHECK(enumerate_table(t, {std::numbers::pi - 0.1}, {0.3}).cells == std::vector<std::size_t>{0});
    // [pi - 1, pi + 0.8] reaches node 3 below and, after wrapping, node 1.
    const auto e = enumerate_table(t, {std::numbers::pi - 0.1}, {0.9});
    auto cells = e.cells;
    std::sort(cells.begin(), cells.end());
    CHECK(cells == std::vector<std::size_t>{0, 1, 3});
    CHECK(e.hull.lower[0] == 0.0);
    CHECK(e.hull.upper[0] == 3.0);
  }

  TEST_CASE("property: enumeration is exact") {
    testing::Gen gen(31);
    for (int trial = 0; trial < 200; ++trial) {
      const Grid g = gen.grid(3, 6, false);
      const Tabulated t = random_table(gen, g, 1 + gen.index(2));
      const SmallVec x = gen.point_in(g);
      SmallVec half(g.dims());
      for (std::size_t d = 0; d < g.dims(); ++d) half[d] = gen.uniform(0.0, 2.0 * g.spacing(d));
      const Enumeration en = enumerate_table(t, x, half);
      REQUIRE_FALSE(en.cells.empty());
      // Every enumerated cell is reached by the error that pulls the estimate
      // as close to its node as the box allows.
      for (std::size_t cell : en.cells) {
        const SmallVec node = g.point(cell);
        SmallVec est(g.dims());
        for (std::size_t d = 0; d < g.dims(); ++d) est[d] = std::clamp(node[d], x[d] - half[d], x[d] + half[d]);
        CHECK(tabulated_cell(t, est) == cell);
      }
      // Sampled errors never leave the hull.
      for (int s = 0; s < 100; ++s) {
        const SmallVec u = tabulated_lookup(t, x + gen.in_box(half));
        for (std::size_t k = 0; k < t.control_dims; ++k) {
          CHECK(u[k] >= en.hull.lower[k]);
          CHECK(u[k] <= en.hull.upper[k]);
        }
      }
    }
  }

  TEST_CASE("ibp examples") {
    Mlp id;
    id.layers.push_back(DenseLayer{Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Activation::kNone});
    const auto a = bounds_by_ibp(id, IntervalBox{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)});
    CHECK(a.lower[0] == -1.0);
    CHECK(a.upper[0] == 1.0);

    Mlp affine;
    affine.layers.push_back(DenseLayer{Eigen::MatrixXd{{1.0, -1.0}}, Eigen::VectorXd{{0.5}}, Activation::kNone});
    const auto b = bounds_by_ibp(affine, IntervalBox::from_bounds(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)));
    CHECK(b.lower[0] == -0.5);
    CHECK(b.upper[0] == 1.5);

    Mlp relu;
    relu.layers.push_back(DenseLayer{Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Activation::kRelu});
    const auto c = bounds_by_ibp(relu, IntervalBox::from_bounds(Eigen::VectorXd{{-0.5}}, Eigen::VectorXd{{1.5}}));
    CHECK(c.lower[0] == 0.0);
    CHECK(c.upper[0] == 1.5);
  }

  TEST_CASE("property: ibp equals the corner hull on affine networks") {
    testing::Gen gen(32);
    for (int trial = 0; trial < 100; ++trial) {
      const int in = 1 + static_cast<int>(gen.index(4));
      const Mlp net = random_mlp(gen, {in, 5, 3, 2}, Activation::kNone);
      const SmallVec c = gen.vec(in, -1, 1), r = gen.vec(in, 0, 1);
      const auto b = bounds_by_ibp(net, IntervalBox{eig(c), eig(r)});
      Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, 1e300), hi = -lo;
      for (int mask = 0; mask < (1 << in); ++mask) {
        Eigen::VectorXd x(in);
        for (int d = 0; d < in; ++d) x[d] = c[d] + ((mask >> d) & 1 ? r[d] : -r[d]);
        const Eigen::VectorXd y = mlp_forward(net, x);
        lo = lo.cwiseMin(y);
        hi = hi.cwiseMax(y);
      }
      for (int k = 0; k < 2; ++k) {
        CHECK(b.lower[k] == doctest::Approx(lo[k]).epsilon(1e-12));
        CHECK(b.upper[k] == doctest::Approx(hi[k]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("property: ibp is sound for relu and tanh networks") {
    testing::Gen gen(33);
    for (int trial = 0; trial < 60; ++trial) {
      const Mlp net = random_mlp(gen, {3, 16, 16, 1}, trial % 2 ? Activation::kTanh : Activation::kRelu);
      const SmallVec c = gen.vec(3, -2, 2), r = gen.vec(3, 0, 0.5);
      const auto b = bounds_by_ibp(net, IntervalBox{eig(c), eig(r)});
      for (int s = 0; s < 1000; ++s) {
        const double y = mlp_forward(net, eig(c + gen.in_box(r)))[0];
        CHECK(y >= b.lower[0] - 1e-12);
        CHECK(y <= b.upper[0] + 1e-12);
      }
    }
  }

  TEST_CASE("property: bounds never shrink when the error box grows") {
    testing::Gen gen(34);
    for (int trial = 0; trial < 100; ++trial) {
      const Grid g = gen.grid(3, 6, false);
      const Tabulated t = random_table(gen, g, 1);
      const Mlp net = random_mlp(gen, {static_cast<int>(g.dims()), 8, 1}, Activation::kTanh);
      const SmallVec x = gen.point_in(g);
      const SmallVec h1 = gen.vec(g.dims(), 0.0, 1.0);
      SmallVec h2 = h1;
      for (auto& v : h2) v += gen.uniform(0.0, 1.0);
      const auto e1 = bounds_by_enumeration(t, x, h1), e2 = bounds_by_enumeration(t, x, h2);
      CHECK(e2.lower[0] <= e1.lower[0]);
      CHECK(e2.upper[0] >= e1.upper[0]);
      const auto i1 = bounds_by_ibp(net, IntervalBox{eig(x), eig(h1)});
      const auto i2 = bounds_by_ibp(net, IntervalBox{eig(x), eig(h2)});
      CHECK(i2.lower[0] <= i1.lower[0] + 1e-12);
      CHECK(i2.upper[0] >= i1.upper[0] - 1e-12);
    }
  }

  TEST_CASE("wrapped ibp covers estimates across the angle seam") {
    testing::Gen gen(35);
    const Mlp net = random_mlp(gen, {3, 12, 1}, Activation::kTanh);
    const ClosedLoopModel m{Dynamics::dubins3d(1.0), Controller(net, 3), ErrorBound::static_box({0.2, 0.2, 0.3}), {2}};
    const SmallVec half{0.2, 0.2, 0.3};
    for (int trial = 0; trial < 50; ++trial) {
      SmallVec x{gen.uniform(0, 5), gen.uniform(-2, 2), gen.uniform(2.9, std::numbers::pi)};
      const auto b = bounds_by_ibp_wrapped(net, x, half, {2});
      for (int s = 0; s < 300; ++s) {
        const double u = m.control(x, gen.in_box(half)).u[0];
        CHECK(u >= b.lower[0] - 1e-12);
        CHECK(u <= b.upper[0] + 1e-12);
      }
    }
  }

  TEST_CASE("bounds field with zero initial error is the controller itself") {
    testing::Gen gen(36);
    const Grid g({0.0, -2.0, -std::numbers::pi}, {4.0, 2.0, std::numbers::pi}, {5, 5, 6}, {false, false, true});
    const Tabulated t = random_table(gen, g, 1);
    const ClosedLoopModel m{Dynamics::dubins3d(1.0), Controller(t, 3), ErrorBound::linear_growth({0.1, 0.1, 0.02}),
                            {2}};
    const auto f = build_bounds_field(m, g, DarkTimeAxis{3.0, 3});
    CHECK(f.has_dark_time());
    CHECK(f.dark_time(1) == 1.5);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto at0 = f.at(i, 0);
      CHECK(at0.lower[0] == t.table[i]);
      CHECK(at0.upper[0] == t.table[i]);
      // The middle sample uses the box (0.15, 0.15, 0.03).
      const auto mid = f.at(i, 1);
      const auto want = bounds_by_enumeration(t, g.point(i), {0.15, 0.15, 0.03});
      CHECK(mid.lower[0] == want.lower[0]);
      CHECK(mid.upper[0] == want.upper[0]);
    }
    CHECK(f.dark_index_for(0.0) == 0);
    CHECK(f.dark_index_for(0.1) == 1);
    CHECK(f.dark_index_for(1.5) == 1);
    CHECK(f.dark_index_for(2.9) == 2);
  }

  TEST_CASE("mlp bounds field is sound under sampled errors") {
    testing::Gen gen(37);
    const Grid g({0.0, -2.0, -std::numbers::pi}, {4.0, 2.0, std::numbers::pi}, {5, 5, 8}, {false, false, true});
    const Mlp net = random_mlp(gen, {3, 16, 16, 1}, Activation::kTanh);
    const ClosedLoopModel m{Dynamics::dubins3d(1.0), Controller(net, 3), ErrorBound::linear_growth({0.1, 0.1, 0.02}),
                            {2}};
    const auto f = build_bounds_field(m, g, DarkTimeAxis{2.0, 5});
    int samples = 0;
    while (samples < 10000) {
      const std::size_t i = gen.index(g.size());
      const std::size_t q = gen.index(5);
      const SmallVec e = gen.in_box(m.error.half_widths(f.dark_time(q)));
      const double u = m.control(g.point(i), e).u[0];
      const auto b = f.at(i, q);
      CHECK(u >= b.lower[0] - 1e-12);
      CHECK(u <= b.upper[0] + 1e-12);
      ++samples;
    }
  }

  TEST_CASE("bounds field rejects arms without a bounding route") {
    const ClosedLoopModel m{Dynamics::dubins3d(5.0), Controller(TanProportional{-0.01, -0.4, 0, 2}, 3),
                            ErrorBound::static_box({1.0, 0.0, 0.1}), {}};
    const Grid g({-1, -1, -1}, {1, 1, 1}, {3, 3, 3}, {false, false, false});
    CHECK_THROWS_AS(build_bounds_field(m, g), ConfigError);
  }

  TEST_CASE("hand-written bounds file matches the documented layout") {
    std::ostringstream os;
    io::Writer w(os);
    w.bytes("RVCB");
    w.u32(1);
    w.u32(1);  // control dims
    w.u8(0);   // no dark-time axis
    w.u32(1);
    w.u32(3);
    w.f64(0.0);
    w.f64(2.0);
    w.u8(0);
    for (double v : {-1.0, -0.5, 0.0}) w.f64(v);
    for (double v : {1.0, 0.5, 0.25}) w.f64(v);
    std::istringstream is(os.str());
    const ControlBoundsField f = read_bounds(is);
    CHECK(f.grid() == Grid({0.0}, {2.0}, {3}, {false}));
    CHECK(f.at(1).lower[0] == -0.5);
    CHECK(f.at(1).upper[0] == 0.5);
    CHECK(f.at(2).upper[0] == 0.25);
    CHECK(f.max_magnitude()[0] == 1.0);
    std::ostringstream again;
    write_bounds(again, f);
    CHECK(again.str() == os.str());
  }
}
