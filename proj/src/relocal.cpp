#include "vloc/relocal.hpp"

#include "vloc/errors.hpp"
#include "vloc/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

namespace vloc {

std::optional<double> bilinear_depth(const DepthImage& depth, const Vec2& uv,
                                     const DepthRange& range) {
  const int u0 = static_cast<int>(std::floor(uv.x()));
  const int v0 = static_cast<int>(std::floor(uv.y()));
  const double a = uv.x() - u0, b = uv.y() - v0;
  double inv = 0.0;
  for (int dv = 0; dv <= 1; ++dv) {
    for (int du = 0; du <= 1; ++du) {
      const double w = (du ? a : 1.0 - a) * (dv ? b : 1.0 - b);
      const int x = u0 + du, y = v0 + dv;
      // A neighbour with zero weight still has to be valid: mixing surfaces
      // at depth edges is what the rule guards against.
      if (!depth.in_bounds(x, y)) {
        if (w == 0.0) continue;
        return std::nullopt;
      }
      const double d = depth.at(x, y);
      if (!range.contains(d)) return std::nullopt;
      inv += w / d;
    }
  }
  if (!(inv > 0.0)) return std::nullopt;
  const double d = 1.0 / inv;
  if (!range.contains(d)) return std::nullopt;
  return d;
}

std::vector<LiftedPair> lift(const MatchSet& matches, const DepthImage& depth_query,
                             const CameraIntrinsics& K, const DepthRange& range) {
  std::vector<LiftedPair> out;
  out.reserve(matches.size());
  for (const Correspondence& c : matches.correspondences) {
    const auto d = bilinear_depth(depth_query, c.uv_query, range);
    if (!d) continue;
    out.push_back({unproject(K, c.uv_query, *d, range), c.uv_ref});
  }
  return out;
}

std::string status_name(RelocStatus s) {
  switch (s) {
    case RelocStatus::Success: return "Success";
    case RelocStatus::TooFewMatches: return "TooFewMatches";
    case RelocStatus::RansacFailed: return "RansacFailed";
  }
  return "?";
}

namespace {

using Poly = std::vector<double>;  // coefficients, lowest degree first

Poly mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly add(const Poly& a, const Poly& b, double sb = 1.0) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += sb * b[i];
  return r;
}

Poly scale(Poly a, double s) {
  for (double& x : a) x *= s;
  return a;
}

double eval(const Poly& p, double x) {
  double r = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) r = r * x + p[i];
  return r;
}

/// Real roots via the companion matrix, polished by Newton steps.
std::vector<double> real_roots(Poly p) {
  while (p.size() > 1 && std::abs(p.back()) < 1e-14 * (1.0 + std::abs(p.front()))) p.pop_back();
  const int n = static_cast<int>(p.size()) - 1;
  std::vector<double> roots;
  if (n < 1) return roots;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) C(0, i) = -p[n - 1 - i] / p[n];
  for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  Poly dp(n);
  for (int i = 1; i <= n; ++i) dp[i - 1] = i * p[i];
  for (int i = 0; i < n; ++i) {
    const auto z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * std::max(1.0, std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 5; ++it) {
      const double d = eval(dp, x);
      if (d == 0.0) break;
      const double step = eval(p, x) / d;
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

double reproj_error2(const Pose& T, const LiftedPair& pr, const CameraIntrinsics& K) {
  const auto r = reprojection_residual(T, pr.p3d, pr.uv_ref, K);
  return r ? r->squaredNorm() : std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<Pose> solve_p3p(const Vec3 bearings[3], const Vec3 points[3]) {
  const Vec3 f1 = bearings[0].normalized(), f2 = bearings[1].normalized(), f3 = bearings[2].normalized();
  const double ca = f2.dot(f3), cb = f1.dot(f3), cg = f1.dot(f2);
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  std::vector<Pose> out;
  if (a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18) return out;

  // s2 = u s1, s3 = v s1. Eliminating s1 and u leaves a quartic in v.
  const Poly B{1.0, -2.0 * cb, 1.0};                  // 1 + v^2 - 2 v cb
  const Poly N = add(scale(B, a2 - c2), Poly{b2, 0.0, -b2});  // (a2-c2) B - b2 (v^2 - 1)
  const Poly D{2.0 * b2 * cg, -2.0 * b2 * ca};         // 2 b2 (cg - v ca)
  const Poly D2 = mul(D, D);
  const Poly inner = add(add(D2, mul(N, N)), scale(mul(N, D), -2.0 * cg));
  const Poly quartic = add(scale(inner, b2), scale(mul(B, D2), -c2));

  for (double v : real_roots(quartic)) {
    if (!(v > 0.0)) continue;
    const double dv = eval(D, v);
    if (std::abs(dv) < 1e-14) continue;
    const double u = eval(N, v) / dv;
    if (!(u > 0.0)) continue;
    const double bv = eval(B, v);
    if (!(bv > 0.0)) continue;
    const double s1 = std::sqrt(b2 / bv);
    Eigen::Matrix3d src, dst;
    src << points[0], points[1], points[2];
    dst << s1 * f1, u * s1 * f2, v * s1 * f3;
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
    const Mat3 R = T.topLeftCorner<3, 3>();
    if (!R.allFinite() || std::abs(R.determinant() - 1.0) > 1e-6) continue;
    out.emplace_back(Vec3(T.topRightCorner<3, 1>()), R);
  }
  return out;
}

std::optional<Vec2> reprojection_residual(const Pose& T, const Vec3& p, const Vec2& uv,
                                          const CameraIntrinsics& K) {
  const auto proj = project_unbounded(K, T * p);
  if (!proj) return std::nullopt;
  return *proj - uv;
}

Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& T, const Vec3& p,
                                                  const CameraIntrinsics& K) {
  const Vec3 X = T * p;
  const double z = X.z(), iz = 1.0 / z;
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << K.fx * iz, 0.0, -K.fx * X.x() * iz * iz,
           0.0, K.fy * iz, -K.fy * X.y() * iz * iz;
  const Mat3 R = T.rotation_matrix();
  Eigen::Matrix<double, 3, 6> dX;
  dX.leftCols<3>() = R;
  dX.rightCols<3>() = -R * skew(p);
  return dproj * dX;
}

RefineResult refine_pose(const Pose& T0, const std::vector<LiftedPair>& pairs,
                         const std::vector<std::size_t>& subset, const CameraIntrinsics& K,
                         int max_iters, double tol) {
  auto cost_of = [&](const Pose& T) {
    double c = 0.0;
    for (std::size_t i : subset) c += reproj_error2(T, pairs[i], K);
    return c;
  };
  RefineResult r;
  r.pose = T0;
  r.initial_cost = r.final_cost = cost_of(T0);
  if (!std::isfinite(r.initial_cost)) return r;
  for (int it = 0; it < max_iters; ++it) {
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i : subset) {
      const auto res = reprojection_residual(r.pose, pairs[i].p3d, pairs[i].uv_ref, K);
      if (!res) continue;
      const auto J = reprojection_jacobian(r.pose, pairs[i].p3d, K);
      H += J.transpose() * J;
      g += J.transpose() * *res;
    }
    const Eigen::LDLT<Mat6> ldlt(H);
    if (ldlt.info() != Eigen::Success) break;
    const Vec6 delta = -ldlt.solve(g);
    if (!delta.allFinite()) break;
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 12; ++h, step *= 0.5) {
      const Pose cand = r.pose * exp_map(delta * step);
      const double c = cost_of(cand);
      if (c < r.final_cost) {
        const double prev = r.final_cost;
        r.pose = cand;
        r.final_cost = c;
        accepted = true;
        ++r.iterations;
        if (prev - c <= tol * std::max(prev, 1e-300)) it = max_iters;
        break;
      }
    }
    if (!accepted) break;
  }
  return r;
}

RelocResult solve_pnp_ransac(const std::vector<LiftedPair>& pairs, const CameraIntrinsics& K,
                             const PnpParams& params) {
  const auto start = std::chrono::steady_clock::now();
  RelocResult result;
  result.total = pairs.size();
  auto finish = [&](RelocResult r) {
    r.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
  };
  if (pairs.size() < 4) {
    result.status = RelocStatus::TooFewMatches;
    return finish(result);
  }
  const double thresh2 = params.reproj_thresh * params.reproj_thresh;
  auto inliers_of = [&](const Pose& T) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (reproj_error2(T, pairs[i], K) < thresh2) in.push_back(i);
    return in;
  };
  // MSAC: truncated squared error. Counting inliers alone lets a loose model
  // that picks up one extra outlier beat the exact one on planar scenes.
  auto msac_cost = [&](const Pose& T) {
    double c = 0.0;
    for (const auto& pr : pairs) c += std::min(reproj_error2(T, pr, K), thresh2);
    return c;
  };

  std::vector<Vec3> bearings(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    bearings[i] = Vec3((pairs[i].uv_ref.x() - K.cx) / K.fx, (pairs[i].uv_ref.y() - K.cy) / K.fy, 1.0);
  }

  Rng rng(params.seed);
  const std::size_t n = pairs.size();
  std::vector<std::size_t> best_inliers;
  Pose best;
  double best_cost = std::numeric_limits<double>::infinity();
  long needed = params.max_iters;
  for (long it = 0; it < needed && it < params.max_iters; ++it) {
    std::size_t s[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        s[k] = rng.index(n);
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && s[j] != s[k];
      } while (!fresh);
    }
    const Vec3 b[3] = {bearings[s[0]], bearings[s[1]], bearings[s[2]]};
    const Vec3 p[3] = {pairs[s[0]].p3d, pairs[s[1]].p3d, pairs[s[2]].p3d};
    const auto sols = solve_p3p(b, p);
    const Pose* pick = nullptr;
    double pick_err = std::numeric_limits<double>::infinity();
    for (const Pose& T : sols) {
      const double e = reproj_error2(T, pairs[s[3]], K);
      if (e < pick_err) {
        pick_err = e;
        pick = &T;
      }
    }
    if (pick == nullptr || !(pick_err < thresh2)) continue;
    const double cost = msac_cost(*pick);
    if (cost < best_cost) {
      best_cost = cost;
      best_inliers = inliers_of(*pick);
      best = *pick;
      const double w = double(best_inliers.size()) / double(n);
      const double denom = std::log(1.0 - std::pow(w, 4));
      if (denom < 0.0) {
        const double want = std::ceil(std::log(1.0 - params.confidence) / denom);
        needed = static_cast<long>(std::min<double>(want, params.max_iters));
      } else {
        needed = 0;  // every point is an inlier
      }
    }
  }
  if (best_inliers.size() < 4) {
    result.status = RelocStatus::RansacFailed;
    return finish(result);
  }

  // Refine on the consensus set, re-select, repeat while the truncated cost
  // keeps dropping.
  Pose final_pose = best;
  std::vector<std::size_t> final_in = best_inliers;
  for (int round = 0; round < 3 && final_in.size() >= 4; ++round) {
    const RefineResult ref = refine_pose(final_pose, pairs, final_in, K, params.refine_iters, params.refine_tol);
    const double cost = msac_cost(ref.pose);
    if (!(cost < best_cost)) break;
    best_cost = cost;
    final_pose = ref.pose;
    final_in = inliers_of(final_pose);
  }
  result.pose = final_pose;
  result.inliers = final_in.size();
  result.status = result.inliers >= params.min_inliers ? RelocStatus::Success : RelocStatus::RansacFailed;
  return finish(result);
}

RelocResult localize_from_matches(const Pose& node_pose, const MatchSet& matches,
                                  const Observation& obs, const CameraIntrinsics& K,
                                  const PnpParams& params) {
  RelocResult r;
  if (obs.has_depth()) r = solve_pnp_ransac(lift(matches, obs.depth, K), K, params);
  if (r.status == RelocStatus::Success) r.pose = to_body(to_optical(node_pose) * r.pose);
  return r;
}

RelocResult localize_against_node(const MapNode& node, const Observation& obs,
                                  const CameraIntrinsics& K, const Matcher& matcher,
                                  const PnpParams& params) {
  const auto start = std::chrono::steady_clock::now();
  RelocResult r;
  if (obs.has_depth()) r = localize_from_matches(node.pose, matcher.match(node, obs), obs, K, params);
  r.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

RelocMetrics compute_reloc_metrics(const std::vector<std::pair<RelocResult, Pose>>& results) {
  if (results.empty()) throw EmptyInput("compute_reloc_metrics: no results");
  RelocMetrics m;
  std::vector<double> et, er;
  std::size_t b1 = 0, b2 = 0, b3 = 0;
  double time = 0.0;
  for (const auto& [r, gt] : results) {
    time += r.time_ms;
    if (r.status != RelocStatus::Success) continue;
    const double t = (r.pose.translation() - gt.translation()).norm();
    const double a = rotation_angle(r.pose.rotation(), gt.rotation()) * 180.0 / std::numbers::pi;
    et.push_back(t);
    er.push_back(a);
    b1 += t <= 0.05 && a <= 5.0;
    b2 += t <= 0.25 && a <= 5.0;
    b3 += t <= 1.0 && a <= 10.0;
  }
  const double n = double(results.size());
  auto median = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  };
  if (!et.empty()) {
    m.max_et = *std::max_element(et.begin(), et.end());
    m.max_er = *std::max_element(er.begin(), er.end());
  }
  m.median_et = median(et);
  m.median_er = median(er);
  m.p_5cm_5deg = 100.0 * double(b1) / n;
  m.p_25cm_5deg = 100.0 * double(b2) / n;
  m.p_1m_10deg = 100.0 * double(b3) / n;
  m.pct_estimated = 100.0 * double(et.size()) / n;
  m.mean_time_ms = time / n;
  return m;
}

std::string format_reloc_metrics(const RelocMetrics& m) {
  std::ostringstream out;
  out << "max_et,max_er,median_et,median_er,p_5cm_5deg,p_25cm_5deg,p_1m_10deg,pct_estimated,mean_time_ms\n";
  for (double v : {m.max_et, m.max_er, m.median_et, m.median_er, m.p_5cm_5deg, m.p_25cm_5deg,
                   m.p_1m_10deg, m.pct_estimated}) {
    out << format_double(v, 9) << ',';
  }
  out << format_double(m.mean_time_ms, 9) << '\n';
  return out.str();
}

}  // namespace vloc
