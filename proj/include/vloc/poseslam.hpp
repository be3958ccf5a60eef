#pragma once

#include "vloc/geometry.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace vloc {

struct PriorFactor {
  std::size_t index = 0;
  Pose measured;
  Vec6 sigmas = Vec6::Ones();  // m, m, m, rad, rad, rad
};

struct BetweenFactor {
  std::size_t a = 0;
  std::size_t b = 0;  // a + 1
  Pose measured;
  Vec6 sigmas = Vec6::Ones();
};

/// e = log(Z^-1 X) with the split retraction.
Vec6 prior_residual(const Pose& x, const Pose& z);
/// d e / d delta for x * exp(delta).
Mat6 prior_jacobian(const Pose& x, const Pose& z);

/// e = log(Z^-1 (xa^-1 xb)).
Vec6 between_residual(const Pose& xa, const Pose& xb, const Pose& z);
void between_jacobians(const Pose& xa, const Pose& xb, const Pose& z, Mat6& ja, Mat6& jb);

struct LmParams {
  double lambda0 = 1e-4;
  int max_iters = 50;
  double rel_tol = 1e-9;
  /// Huber threshold on the whitened prior residual norm; <= 0 disables.
  double huber_delta = 3.0;
};

struct OptimizeResult {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;           // accepted steps
  std::vector<double> costs;    // accepted cost sequence, starting with the initial cost
};

class FusionGraph {
 public:
  /// Appends a free state. The first state of a graph is created this way;
  /// later ones normally come from propagate.
  std::size_t add_state(const Pose& initial, double timestamp);
  /// x_k = x_{k-1} * delta plus the between factor. Throws
  /// NonMonotonicTimestamp or EmptyGraph.
  Pose propagate(const Pose& delta, const Vec6& sigmas, double timestamp);
  /// Throws UnknownState.
  void add_vloc_fix(std::size_t index, const Pose& pose, const Vec6& sigmas);

  /// Levenberg-Marquardt over the last `window` states (all when unset),
  /// earlier states held fixed. Throws NoGaugePrior or SingularNormalEquations.
  OptimizeResult optimize(std::optional<std::size_t> window = std::nullopt,
                          const LmParams& params = {});

  /// Total robust cost of the current estimate.
  double cost(const LmParams& params = {}) const;

  /// Throws EmptyGraph.
  std::pair<Pose, double> current_pose() const;
  /// Index of the state whose timestamp is nearest to `t` (earlier on ties).
  std::size_t nearest_state(double t) const;

  std::size_t size() const { return states_.size(); }
  bool empty() const { return states_.empty(); }
  const std::vector<Pose>& states() const { return states_; }
  const std::vector<double>& timestamps() const { return stamps_; }
  const std::vector<PriorFactor>& priors() const { return priors_; }
  const std::vector<BetweenFactor>& betweens() const { return betweens_; }
  void set_state(std::size_t i, const Pose& p) { states_.at(i) = p; }

 private:
  std::vector<Pose> states_;
  std::vector<double> stamps_;
  std::vector<PriorFactor> priors_;
  std::vector<BetweenFactor> betweens_;
};

}  // namespace vloc
