#include "vloc/poseslam.hpp"

#include "vloc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>

namespace vloc {

Vec6 prior_residual(const Pose& x, const Pose& z) { return log_map(z.inverse() * x); }

Mat6 prior_jacobian(const Pose& x, const Pose& z) {
  const Pose e = z.inverse() * x;
  const Vec6 le = log_map(e);
  Mat6 J = Mat6::Zero();
  J.topLeftCorner<3, 3>() = e.rotation_matrix();
  J.bottomRightCorner<3, 3>() = so3_right_jacobian_inv(le.tail<3>());
  return J;
}

Vec6 between_residual(const Pose& xa, const Pose& xb, const Pose& z) {
  return log_map(z.inverse() * (xa.inverse() * xb));
}

void between_jacobians(const Pose& xa, const Pose& xb, const Pose& z, Mat6& ja, Mat6& jb) {
  const Pose B = xa.inverse() * xb;
  const Pose E = z.inverse() * B;
  const Vec6 le = log_map(E);
  const Mat3 Jr_inv = so3_right_jacobian_inv(le.tail<3>());
  const Mat3 RzT = z.rotation_matrix().transpose();
  const Mat3 RB = B.rotation_matrix();

  jb = Mat6::Zero();
  jb.topLeftCorner<3, 3>() = E.rotation_matrix();
  jb.bottomRightCorner<3, 3>() = Jr_inv;

  ja = Mat6::Zero();
  ja.topLeftCorner<3, 3>() = -RzT;
  ja.topRightCorner<3, 3>() = RzT * skew(B.translation());
  ja.bottomRightCorner<3, 3>() = -Jr_inv * RB.transpose();
}

namespace {

double robust(double s, double delta) {
  if (delta <= 0.0 || s <= delta * delta) return s;
  return 2.0 * delta * std::sqrt(s) - delta * delta;
}

double robust_weight(double s, double delta) {
  if (delta <= 0.0 || s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

Vec6 whiten(const Vec6& r, const Vec6& sigmas) { return r.cwiseQuotient(sigmas); }

}  // namespace

std::size_t FusionGraph::add_state(const Pose& initial, double timestamp) {
  if (!stamps_.empty() && !(timestamp > stamps_.back())) {
    throw NonMonotonicTimestamp("add_state: timestamp " + format_double(timestamp) +
                                " not after " + format_double(stamps_.back()));
  }
  states_.push_back(initial);
  stamps_.push_back(timestamp);
  return states_.size() - 1;
}

Pose FusionGraph::propagate(const Pose& delta, const Vec6& sigmas, double timestamp) {
  if (states_.empty()) throw EmptyGraph("propagate: graph has no states");
  if (!(sigmas.array() > 0.0).all()) throw std::invalid_argument("propagate: sigmas must be positive");
  const std::size_t a = states_.size() - 1;
  const Pose next = states_.back() * delta;
  add_state(next, timestamp);
  betweens_.push_back({a, a + 1, delta, sigmas});
  return next;
}

void FusionGraph::add_vloc_fix(std::size_t index, const Pose& pose, const Vec6& sigmas) {
  if (index >= states_.size()) {
    throw UnknownState("add_vloc_fix: state " + std::to_string(index) + " does not exist (" +
                       std::to_string(states_.size()) + " states)");
  }
  if (!(sigmas.array() > 0.0).all()) throw std::invalid_argument("add_vloc_fix: sigmas must be positive");
  priors_.push_back({index, pose, sigmas});
}

double FusionGraph::cost(const LmParams& params) const {
  double c = 0.0;
  for (const PriorFactor& f : priors_) {
    c += robust(whiten(prior_residual(states_[f.index], f.measured), f.sigmas).squaredNorm(),
                params.huber_delta);
  }
  for (const BetweenFactor& f : betweens_) {
    c += whiten(between_residual(states_[f.a], states_[f.b], f.measured), f.sigmas).squaredNorm();
  }
  return c;
}

std::pair<Pose, double> FusionGraph::current_pose() const {
  if (states_.empty()) throw EmptyGraph("current_pose: graph has no states");
  return {states_.back(), stamps_.back()};
}

std::size_t FusionGraph::nearest_state(double t) const {
  if (stamps_.empty()) throw EmptyGraph("nearest_state: graph has no states");
  const auto it = std::lower_bound(stamps_.begin(), stamps_.end(), t);
  if (it == stamps_.begin()) return 0;
  if (it == stamps_.end()) return stamps_.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - stamps_.begin());
  return (t - stamps_[hi - 1] <= stamps_[hi] - t) ? hi - 1 : hi;
}

OptimizeResult FusionGraph::optimize(std::optional<std::size_t> window, const LmParams& params) {
  if (priors_.empty()) throw NoGaugePrior("optimize: graph has no prior factor");
  const std::size_t n = states_.size();
  const std::size_t first = (window && *window < n) ? n - *window : 0;
  const std::size_t m = n - first;
  if (m == 0) return {};

  std::vector<const PriorFactor*> priors;
  std::vector<const BetweenFactor*> betweens;
  for (const PriorFactor& f : priors_)
    if (f.index >= first) priors.push_back(&f);
  bool anchored = false;
  for (const BetweenFactor& f : betweens_) {
    if (f.b >= first) {
      betweens.push_back(&f);
      anchored = anchored || f.a < first;
    }
  }
  if (priors.empty() && !anchored) {
    throw NoGaugePrior("optimize: no prior or fixed state anchors the window");
  }

  auto window_cost = [&](const std::vector<Pose>& x) {
    double c = 0.0;
    for (const PriorFactor* f : priors) {
      c += robust(whiten(prior_residual(x[f->index], f->measured), f->sigmas).squaredNorm(),
                  params.huber_delta);
    }
    for (const BetweenFactor* f : betweens) {
      c += whiten(between_residual(x[f->a], x[f->b], f->measured), f->sigmas).squaredNorm();
    }
    return c;
  };

  OptimizeResult result;
  double cur = window_cost(states_);
  result.initial_cost = result.final_cost = cur;
  result.costs.push_back(cur);
  if (cur < 1e-18) return result;

  const Eigen::Index dim = static_cast<Eigen::Index>(6 * m);
  double lambda = params.lambda0;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    auto add_block = [&](std::size_t i, std::size_t j, const Mat6& blk) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(6 * (i - first));
      const Eigen::Index c0 = static_cast<Eigen::Index>(6 * (j - first));
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c)
          if (blk(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, blk(r, c));
    };
    for (const PriorFactor* f : priors) {
      const Vec6 inv_s = f->sigmas.cwiseInverse();
      const Vec6 rw = prior_residual(states_[f->index], f->measured).cwiseProduct(inv_s);
      const double w = robust_weight(rw.squaredNorm(), params.huber_delta);
      const Mat6 Jw = inv_s.asDiagonal() * prior_jacobian(states_[f->index], f->measured);
      add_block(f->index, f->index, w * Jw.transpose() * Jw);
      g.segment<6>(6 * (f->index - first)) += w * Jw.transpose() * rw;
    }
    for (const BetweenFactor* f : betweens) {
      const Vec6 inv_s = f->sigmas.cwiseInverse();
      const Vec6 rw = between_residual(states_[f->a], states_[f->b], f->measured).cwiseProduct(inv_s);
      Mat6 ja, jb;
      between_jacobians(states_[f->a], states_[f->b], f->measured, ja, jb);
      const Mat6 Ja = inv_s.asDiagonal() * ja, Jb = inv_s.asDiagonal() * jb;
      add_block(f->b, f->b, Jb.transpose() * Jb);
      g.segment<6>(6 * (f->b - first)) += Jb.transpose() * rw;
      if (f->a >= first) {
        add_block(f->a, f->a, Ja.transpose() * Ja);
        add_block(f->a, f->b, Ja.transpose() * Jb);
        add_block(f->b, f->a, Jb.transpose() * Ja);
        g.segment<6>(6 * (f->a - first)) += Ja.transpose() * rw;
      }
    }
    Eigen::SparseMatrix<double> H(dim, dim);
    H.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd diag = H.diagonal();
    if ((diag.array() <= 0.0).any()) {
      throw SingularNormalEquations("optimize: a state in the window is unconstrained");
    }
    Eigen::SparseMatrix<double> A = H;
    for (Eigen::Index i = 0; i < dim; ++i) A.coeffRef(i, i) += lambda * diag(i);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    if (ldlt.info() != Eigen::Success) {
      throw SingularNormalEquations("optimize: normal equations could not be factorized");
    }
    const Eigen::VectorXd delta = -ldlt.solve(g);
    if (!delta.allFinite()) throw SingularNormalEquations("optimize: non-finite step");

    std::vector<Pose> cand = states_;
    for (std::size_t i = first; i < n; ++i) {
      cand[i] = states_[i] * exp_map(delta.segment<6>(6 * (i - first)));
    }
    const double next = window_cost(cand);
    if (next < cur) {
      states_ = std::move(cand);
      const double rel = (cur - next) / cur;
      cur = next;
      result.costs.push_back(cur);
      ++result.iterations;
      lambda /= 10.0;
      if (rel < params.rel_tol || cur < 1e-18) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
  }
  result.final_cost = cur;
  return result;
}

}  // namespace vloc
