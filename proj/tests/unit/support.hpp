#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "percreach/grid.hpp"
#include "percreach/small_vec.hpp"

namespace testing {

// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool coin() { return index(2) == 1; }
  percreach::SmallVec vec(std::size_t n, double lo, double hi) {
    percreach::SmallVec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  percreach::SmallVec in_box(const percreach::SmallVec& half) {
    percreach::SmallVec v(half.size());
    for (std::size_t i = 0; i < half.size(); ++i) v[i] = half[i] > 0.0 ? uniform(-half[i], half[i]) : 0.0;
    return v;
  }
  // Random grid with 1..max_dims dims, 3..max_shape points per dim.
  percreach::Grid grid(std::size_t max_dims, std::size_t max_shape, bool allow_periodic = true) {
    const std::size_t n = 1 + index(max_dims);
    std::vector<double> lo(n), hi(n);
    std::vector<std::size_t> shape(n);
    std::vector<bool> periodic(n);
    for (std::size_t d = 0; d < n; ++d) {
      lo[d] = uniform(-5.0, 5.0);
      hi[d] = lo[d] + uniform(0.5, 10.0);
      shape[d] = 3 + index(max_shape - 2);
      periodic[d] = allow_periodic && coin();
    }
    return percreach::Grid(lo, hi, shape, periodic);
  }
  // A point inside the grid's box.
  percreach::SmallVec point_in(const percreach::Grid& g) {
    percreach::SmallVec x(g.dims());
    for (std::size_t d = 0; d < g.dims(); ++d) x[d] = uniform(g.lo(d), g.hi(d));
    return x;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("percreach_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> sample(const percreach::Grid& g, auto&& f) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g.point(i));
  return v;
}

}  // namespace testing
