#include <cmath>
#include <numbers>

#include "doctest.h"
#include "percreach/errors.hpp"
#include "percreach/grid.hpp"
#include "support.hpp"

using namespace percreach;

TEST_SUITE("grid") {
  TEST_CASE("spacing excludes the periodic endpoint") {
    const Grid g({0.0, -std::numbers::pi}, {1.0, std::numbers::pi}, {11, 8}, {false, true});
    CHECK(g.spacing(0) == doctest::Approx(0.1));
    CHECK(g.spacing(1) == doctest::Approx(2.0 * std::numbers::pi / 8.0));
    CHECK(g.size() == 88);
    CHECK(g.stride(0) == 8);
    CHECK(g.stride(1) == 1);
  }

  TEST_CASE("constructor rejects bad boxes") {
    CHECK_THROWS_AS(Grid({1.0}, {1.0}, {5}, {false}), ConfigError);
    CHECK_THROWS_AS(Grid({0.0}, {1.0}, {2}, {false}), ConfigError);
    CHECK_THROWS_AS(Grid({0.0, 0.0}, {1.0}, {5}, {false}), ConfigError);
    CHECK_THROWS_AS(Grid({0.0}, {1.0}, {5, 5}, {false}), ConfigError);
  }

  TEST_CASE("ravel and unravel are inverse and points stay in the box") {
    testing::Gen gen(1);
    for (int trial = 0; trial < 50; ++trial) {
      const Grid g = gen.grid(4, 6);
      for (std::size_t i = 0; i < g.size(); i += 1 + g.size() / 40) {
        const auto idx = g.unravel(i);
        CHECK(g.ravel(idx) == i);
        const SmallVec x = g.point(i);
        for (std::size_t d = 0; d < g.dims(); ++d) {
          CHECK(x[d] >= g.lo(d));
          CHECK(x[d] <= g.hi(d));
        }
      }
    }
  }

  TEST_CASE("linear interpolation between two nodes") {
    // Three nodes on [0, 1] sampling u = 2x; the query sits a quarter of the way
    // into the box.
    const ScalarField f(Grid({0.0}, {1.0}, {3}, {false}), {0.0, 1.0, 2.0});
    CHECK(interpolate(f, {0.25}) == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("periodic query at the upper end wraps to the first node") {
    const ScalarField f(Grid({-std::numbers::pi}, {std::numbers::pi}, {4}, {true}), {1.0, 2.0, 3.0, 4.0});
    CHECK(interpolate(f, {std::numbers::pi}) == 1.0);
    // Halfway between the last node and the wrapped first node.
    const double last = -std::numbers::pi + 3.0 * std::numbers::pi / 2.0;
    CHECK(interpolate(f, {last + std::numbers::pi / 4.0}) == doctest::Approx(2.5));
  }

  TEST_CASE("interpolation is exact at nodes") {
    testing::Gen gen(2);
    for (int trial = 0; trial < 40; ++trial) {
      const Grid g = gen.grid(4, 6);
      std::vector<double> v(g.size());
      for (auto& x : v) x = gen.uniform(-3.0, 3.0);
      const ScalarField f(g, v);
      for (std::size_t i = 0; i < g.size(); i += 1 + g.size() / 30) {
        CHECK(interpolate(f, g.point(i)) == v[i]);
      }
    }
  }

  TEST_CASE("out-of-range queries clamp and flag") {
    const ScalarField f(Grid({0.0}, {1.0}, {3}, {false}), {0.0, 1.0, 2.0});
    const auto hi = interpolate_checked(f, {1.5});
    CHECK(hi.clamped);
    CHECK(hi.value == 2.0);
    const auto lo = interpolate_checked(f, {-0.5});
    CHECK(lo.clamped);
    CHECK(lo.value == 0.0);
    const auto tiny = interpolate_checked(f, {1.0 + 1e-12});
    CHECK_FALSE(tiny.clamped);
    CHECK(tiny.value == doctest::Approx(2.0));
    CHECK_THROWS_AS(interpolate(f, {0.1, 0.2}), ArgumentError);
  }

  TEST_CASE("property: affine functions are reproduced exactly") {
    testing::Gen gen(3);
    for (int trial = 0; trial < 200; ++trial) {
      const Grid g = gen.grid(4, 7, false);
      const SmallVec w = gen.vec(g.dims(), -2.0, 2.0);
      const double c = gen.uniform(-1.0, 1.0);
      auto affine = [&](const SmallVec& x) {
        double s = c;
        for (std::size_t d = 0; d < x.size(); ++d) s += w[d] * x[d];
        return s;
      };
      const ScalarField f(g, testing::sample(g, affine));
      for (int q = 0; q < 20; ++q) {
        const SmallVec x = gen.point_in(g);
        const double expect = affine(x);
        CAPTURE(trial);
        CHECK(std::abs(interpolate(f, x) - expect) <= 1e-12 * std::max(1.0, std::abs(expect)) + 1e-12);
      }
    }
  }

  TEST_CASE("property: periodic shift by one period") {
    testing::Gen gen(4);
    for (int trial = 0; trial < 100; ++trial) {
      const Grid g = gen.grid(3, 6);
      std::vector<double> v(g.size());
      for (auto& x : v) x = gen.uniform(-1.0, 1.0);
      const ScalarField f(g, v);
      for (int q = 0; q < 20; ++q) {
        const SmallVec x = gen.point_in(g);
        for (std::size_t d = 0; d < g.dims(); ++d) {
          if (!g.periodic(d)) continue;
          SmallVec y = x;
          y[d] = x[d] + g.period(d);
          CAPTURE(trial);
          CHECK(interpolate(f, y) == doctest::Approx(interpolate(f, x)).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("one-sided differences") {
    const Grid g({0.0}, {2.0}, {3}, {false});
    const auto a = gradient_upwind(g, std::vector<double>{0.0, 1.0, 2.0}, 1);
    CHECK(a.left[0] == 1.0);
    CHECK(a.right[0] == 1.0);
    const auto b = gradient_upwind(g, std::vector<double>{0.0, 0.0, 1.0}, 1);
    CHECK(b.left[0] == 0.0);
    CHECK(b.right[0] == 1.0);
    // Boundaries reuse the outermost interior difference.
    const auto lo = gradient_upwind(g, std::vector<double>{0.0, 0.0, 1.0}, 0);
    CHECK(lo.left[0] == 0.0);
    CHECK(lo.right[0] == 0.0);
    const auto hi = gradient_upwind(g, std::vector<double>{0.0, 0.0, 1.0}, 2);
    CHECK(hi.left[0] == 1.0);
    CHECK(hi.right[0] == 1.0);
    // Periodic boundaries wrap.
    const Grid p({0.0}, {3.0}, {3}, {true});
    const auto w = gradient_upwind(p, std::vector<double>{0.0, 1.0, 5.0}, 0);
    CHECK(w.left[0] == -5.0);
    CHECK(w.right[0] == 1.0);
  }

  TEST_CASE("constant fields have zero gradient everywhere") {
    testing::Gen gen(5);
    const Grid g = gen.grid(4, 5);
    const std::vector<double> v(g.size(), 3.25);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto u = gradient_upwind(g, v, i);
      for (std::size_t d = 0; d < g.dims(); ++d) {
        CHECK(u.left[d] == 0.0);
        CHECK(u.right[d] == 0.0);
      }
    }
  }

  TEST_CASE("property: differences of affine fields equal the slope") {
    testing::Gen gen(6);
    for (int trial = 0; trial < 100; ++trial) {
      const Grid g = gen.grid(4, 6, false);
      const SmallVec w = gen.vec(g.dims(), -3.0, 3.0);
      const auto v = testing::sample(g, [&](const SmallVec& x) {
        double s = 0.5;
        for (std::size_t d = 0; d < x.size(); ++d) s += w[d] * x[d];
        return s;
      });
      for (std::size_t i = 0; i < g.size(); i += 1 + g.size() / 25) {
        const auto u = gradient_upwind(g, v, i);
        for (std::size_t d = 0; d < g.dims(); ++d) {
          CHECK(std::abs(u.left[d] - u.right[d]) <= 1e-12 * std::max(1.0, std::abs(w[d])) * 100);
          CHECK(u.left[d] == doctest::Approx(w[d]).epsilon(1e-9));
        }
      }
    }
  }

  TEST_CASE("dual cell volumes sum to the box volume") {
    testing::Gen gen(7);
    for (int trial = 0; trial < 30; ++trial) {
      const Grid g = gen.grid(3, 6);
      double total = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) total += g.cell_volume(i);
      CHECK(total == doctest::Approx(g.box_volume()).epsilon(1e-12));
    }
  }

  TEST_CASE("nearest index ties round down") {
    const Grid g({0.0}, {2.0}, {3}, {false});
    CHECK(g.nearest_index(0, 0.5) == 0);
    CHECK(g.nearest_index(0, 0.51) == 1);
    CHECK(g.nearest_index(0, 1.5) == 1);
    CHECK(g.nearest_index(0, 9.0) == 2);
    CHECK(g.nearest_index(0, -9.0) == 0);
  }

  TEST_CASE("fields reject non-finite values and size mismatches") {
    const Grid g({0.0}, {1.0}, {3}, {false});
    CHECK_THROWS_AS(ScalarField(g, {0.0, 1.0}), ArgumentError);
    CHECK_THROWS_AS(ScalarField(g, {0.0, NAN, 1.0}), ArgumentError);
  }
}
