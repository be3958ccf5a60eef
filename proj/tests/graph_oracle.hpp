#pragma once

// Reference solver and fixture graphs for the pose-graph checks.

#include "vloc/poseslam.hpp"

#include <Eigen/Dense>
#include <vector>

namespace vloc::testing {

// Dense Gauss-Newton with finite-difference Jacobians over every state of the
// graph, no robust loss. Shares only the residual definitions with the code
// under test.
inline std::vector<Pose> dense_solve(const FusionGraph& g) {
  std::vector<Pose> x = g.states();
  const int n = static_cast<int>(x.size());
  auto residuals = [&](const std::vector<Pose>& s) {
    Eigen::VectorXd r(6 * (g.priors().size() + g.betweens().size()));
    int k = 0;
    for (const auto& f : g.priors()) r.segment<6>(6 * k++) = prior_residual(s[f.index], f.measured).cwiseQuotient(f.sigmas);
    for (const auto& f : g.betweens())
      r.segment<6>(6 * k++) = between_residual(s[f.a], s[f.b], f.measured).cwiseQuotient(f.sigmas);
    return r;
  };
  for (int it = 0; it < 30; ++it) {
    const Eigen::VectorXd r0 = residuals(x);
    Eigen::MatrixXd J(r0.size(), 6 * n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 6; ++k) {
        Vec6 d = Vec6::Zero();
        d(k) = 1e-6;
        auto xp = x, xm = x;
        xp[i] = x[i] * exp_map(d);
        xm[i] = x[i] * exp_map(-d);
        J.col(6 * i + k) = (residuals(xp) - residuals(xm)) / 2e-6;
      }
    }
    const Eigen::VectorXd step = (J.transpose() * J).ldlt().solve(-J.transpose() * r0);
    for (int i = 0; i < n; ++i) x[i] = x[i] * exp_map(step.segment<6>(6 * i));
    if (step.norm() < 1e-12) break;
  }
  return x;
}

/// Ten states, odometry reading 1.1 m per 1 m step, tight priors on the
/// true first and last poses.
inline FusionGraph biased_chain() {
  FusionGraph g;
  g.add_state(Pose(), 0.0);
  const Vec6 odo = Vec6::Constant(0.1), tight = Vec6::Constant(0.01);
  for (int k = 1; k < 10; ++k) g.propagate(Pose(Vec3(1.1, 0, 0), Quat::Identity()), odo, k);
  g.add_vloc_fix(0, Pose(), tight);
  g.add_vloc_fix(9, Pose(Vec3(9, 0, 0), Quat::Identity()), tight);
  return g;
}

}  // namespace vloc::testing
