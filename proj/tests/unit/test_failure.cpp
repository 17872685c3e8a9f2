#include <cmath>

#include "doctest.h"
#include "percreach/errors.hpp"
#include "percreach/failure.hpp"
#include "support.hpp"

using namespace percreach;

TEST_SUITE("failure") {
  TEST_CASE("runway slab") {
    const FailureSpec f(SlabKeepout{0, 10.0});
    CHECK(f.evaluate({0.0, 100.0, 0.0}) == 10.0);
    CHECK(f.evaluate({-10.0, 100.0, 0.0}) == 0.0);
    CHECK(f.evaluate({12.0, 0.0, 0.0}) == -2.0);
    CHECK(f.lipschitz() == 1.0);
    const Grid g({-11.0, 100.0, -0.49}, {11.0, 250.0, 0.49}, {61, 61, 61}, {false, false, false});
    CHECK(f.tolerance(g) == doctest::Approx(2.0 * 22.0 / 60.0));
    CHECK_THROWS_AS(FailureSpec(SlabKeepout{0, 0.0}), ConfigError);
  }

  TEST_CASE("circles give a signed distance to the union") {
    const FailureSpec f(CircularObstacles{{{7.0, 1.0}, {13.0, -1.5}}, {1.5, 1.5}, 0, 1});
    CHECK(f.evaluate({7.0, 1.0, 0.0}) == -1.5);
    CHECK(f.evaluate({7.0, 3.5, 0.0}) == doctest::Approx(1.0));
    CHECK(f.evaluate({13.0, -3.0, 2.0}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(FailureSpec(CircularObstacles{{}, {}, 0, 1}), ConfigError);
    CHECK_THROWS_AS(FailureSpec(CircularObstacles{{{0.0, 0.0}}, {-1.0}, 0, 1}), ConfigError);
    CHECK_THROWS_AS(FailureSpec(CircularObstacles{{{0.0, 0.0}}, {1.0}, 1, 1}), ConfigError);
  }

  TEST_CASE("property: sampled failure fields are Lipschitz with the declared constant") {
    testing::Gen gen(61);
    const FailureSpec circles(CircularObstacles{{{7.0, 1.0}, {13.0, -1.5}}, {1.5, 1.5}, 0, 1});
    const FailureSpec slab(SlabKeepout{0, 10.0});
    for (int trial = 0; trial < 2000; ++trial) {
      const SmallVec a = gen.vec(3, -15, 20), b = gen.vec(3, -15, 20);
      const double dist = std::sqrt(std::pow(a[0] - b[0], 2) + std::pow(a[1] - b[1], 2));
      CHECK(std::abs(circles.evaluate(a) - circles.evaluate(b)) <= circles.lipschitz() * dist + 1e-12);
      CHECK(std::abs(slab.evaluate(a) - slab.evaluate(b)) <= std::abs(a[0] - b[0]) + 1e-12);
    }
  }

  TEST_CASE("zero sublevel set matches the failure region on nodes") {
    const Grid g({-11.0, 100.0, -0.49}, {11.0, 250.0, 0.49}, {23, 5, 5}, {false, false, false});
    const ScalarField l = FailureSpec(SlabKeepout{0, 10.0}).sample(g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK((l[i] <= 0.0) == (std::abs(g.point(i)[0]) >= 10.0));
  }

  TEST_CASE("imported fields") {
    const Grid g({0.0, 0.0}, {2.0, 2.0}, {3, 3}, {false, false});
    const ScalarField field(g, testing::sample(g, [](const SmallVec& x) { return 3.0 * x[0] - 4.0 * x[1]; }));
    const FailureSpec f(ImportedField{field});
    CHECK(f.lipschitz() == doctest::Approx(5.0));
    CHECK(f.evaluate({0.5, 0.5}) == doctest::Approx(-0.5));
    CHECK(f.sample(g) == field);
    CHECK_THROWS_AS(f.sample(Grid({0.0, 0.0}, {2.0, 2.0}, {4, 3}, {false, false})), ConfigError);
    CHECK(f.relevant_dims(2) == std::vector<std::size_t>{0, 1});
  }

  TEST_CASE("out-of-range dims are configuration errors") {
    const Grid g({0.0}, {1.0}, {3}, {false});
    CHECK_THROWS_AS(FailureSpec(SlabKeepout{2, 1.0}).sample(g), ConfigError);
  }
}
