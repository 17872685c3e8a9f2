#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace percreach {

inline constexpr std::size_t kMaxDims = 8;

// Fixed-capacity vector for states, controls, errors and costates. Lives on
// the stack so the per-node kernels never touch the heap.
class SmallVec {
 public:
  SmallVec() = default;
  explicit SmallVec(std::size_t n, double fill = 0.0) : size_(n) {
    assert(n <= kMaxDims);
    std::fill_n(data_.begin(), n, fill);
  }
  SmallVec(std::initializer_list<double> values) : size_(values.size()) {
    assert(values.size() <= kMaxDims);
    std::copy(values.begin(), values.end(), data_.begin());
  }
  explicit SmallVec(std::span<const double> values) : size_(values.size()) {
    assert(values.size() <= kMaxDims);
    std::copy(values.begin(), values.end(), data_.begin());
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double* begin() { return data_.data(); }
  double* end() { return data_.data() + size_; }
  const double* begin() const { return data_.data(); }
  const double* end() const { return data_.data() + size_; }
  std::span<const double> span() const { return {data_.data(), size_}; }
  std::vector<double> to_vector() const { return {begin(), end()}; }

  friend bool operator==(const SmallVec& a, const SmallVec& b) {
    return a.size_ == b.size_ && std::equal(a.begin(), a.end(), b.begin());
  }

 private:
  std::array<double, kMaxDims> data_{};
  std::size_t size_ = 0;
};

inline double dot(const SmallVec& a, const SmallVec& b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline SmallVec operator+(SmallVec a, const SmallVec& b) {
  assert(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline SmallVec operator-(SmallVec a, const SmallVec& b) {
  assert(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline SmallVec operator*(double s, SmallVec a) {
  for (auto& v : a) v *= s;
  return a;
}

}  // namespace percreach
