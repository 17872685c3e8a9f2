#pragma once

#include "percreach/failure.hpp"
#include "percreach/models.hpp"
#include "support.hpp"

namespace testing {

// x' = -x + (x + e) = e with |e| <= ebar.
inline percreach::ClosedLoopModel drift_by_error(double ebar) {
  using namespace percreach;
  return ClosedLoopModel{Dynamics::linear(Eigen::MatrixXd{{-1.0}}, Eigen::MatrixXd{{1.0}}),
                         Controller(LinearFeedback{Eigen::MatrixXd{{1.0}}, Eigen::VectorXd{{0.0}}}, 1),
                         ErrorBound::static_box({ebar}), {}};
}

inline percreach::Grid line_grid(std::size_t n) { return percreach::Grid({-2.0}, {2.0}, {n}, {false}); }

// l(x) = x sampled on the grid.
inline percreach::FailureSpec identity_failure(const percreach::Grid& g) {
  return percreach::FailureSpec(
      percreach::ImportedField{percreach::ScalarField(g, sample(g, [](const percreach::SmallVec& x) { return x[0]; }))});
}

// f == 0: B and K vanish.
inline percreach::ClosedLoopModel static_model(std::size_t n) {
  using namespace percreach;
  return ClosedLoopModel{Dynamics::linear(Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, 1)),
                         Controller(LinearFeedback{Eigen::MatrixXd::Zero(1, n), Eigen::VectorXd::Zero(1)}, n),
                         ErrorBound::static_box(SmallVec(n, 0.5)), {}};
}

}  // namespace testing
