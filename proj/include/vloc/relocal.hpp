#pragma once

#include "vloc/geometry.hpp"
#include "vloc/image.hpp"
#include "vloc/matching.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vloc {

/// A query point in the query optical frame paired with its reference pixel.
struct LiftedPair {
  Vec3 p3d = Vec3::Zero();
  Vec2 uv_ref = Vec2::Zero();
};

/// Depth at a sub-pixel location from its 2x2 neighbourhood. Inverse depth is
/// interpolated bilinearly, which is exact on planar surfaces; any neighbour
/// outside `range` or outside the image invalidates the lookup.
std::optional<double> bilinear_depth(const DepthImage& depth, const Vec2& uv,
                                     const DepthRange& range = {});

/// Lifts the query side of every match; invalid depths are dropped and the
/// order of the rest is preserved.
std::vector<LiftedPair> lift(const MatchSet& matches, const DepthImage& depth_query,
                             const CameraIntrinsics& K, const DepthRange& range = {});

enum class RelocStatus { Success, TooFewMatches, RansacFailed };
std::string status_name(RelocStatus s);

struct RelocResult {
  /// From solve_pnp_ransac: optical transform taking query-frame points into
  /// the reference optical frame. From localize_against_node: world body pose.
  Pose pose;
  std::size_t inliers = 0;
  std::size_t total = 0;
  RelocStatus status = RelocStatus::TooFewMatches;
  double time_ms = 0.0;
};

struct PnpParams {
  double reproj_thresh = 3.0;  // px
  std::size_t min_inliers = 12;
  int max_iters = 1000;
  double confidence = 0.999;
  int refine_iters = 20;
  double refine_tol = 1e-10;
  std::uint64_t seed = 0;
};

/// Minimal solver: up to four poses T with bearing_i ~ T * points_i.
std::vector<Pose> solve_p3p(const Vec3 bearings[3], const Vec3 points[3]);

/// Reprojection residual pi(T * p) - uv; nullopt when the point falls behind
/// the camera.
std::optional<Vec2> reprojection_residual(const Pose& T, const Vec3& p, const Vec2& uv,
                                          const CameraIntrinsics& K);
/// Jacobian of the residual under right perturbation T * exp(delta).
Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& T, const Vec3& p,
                                                  const CameraIntrinsics& K);

struct RefineResult {
  Pose pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};
/// Gauss-Newton on the summed squared reprojection error with step halving;
/// the returned cost never exceeds the initial cost.
RefineResult refine_pose(const Pose& T, const std::vector<LiftedPair>& pairs,
                         const std::vector<std::size_t>& subset, const CameraIntrinsics& K,
                         int max_iters = 20, double tol = 1e-10);

RelocResult solve_pnp_ransac(const std::vector<LiftedPair>& pairs, const CameraIntrinsics& K,
                             const PnpParams& params = {});

/// lift -> PnP -> world pose of the query (body frame) for given matches.
RelocResult localize_from_matches(const Pose& node_pose, const MatchSet& matches,
                                  const Observation& obs, const CameraIntrinsics& K,
                                  const PnpParams& params = {});

/// match -> lift -> PnP -> world pose of the query (body frame).
RelocResult localize_against_node(const MapNode& node, const Observation& obs,
                                  const CameraIntrinsics& K, const Matcher& matcher,
                                  const PnpParams& params = {});

struct RelocMetrics {
  double max_et = 0.0;
  double max_er = 0.0;  // degrees
  double median_et = 0.0;
  double median_er = 0.0;
  double p_5cm_5deg = 0.0;  // percent of all queries
  double p_25cm_5deg = 0.0;
  double p_1m_10deg = 0.0;
  double pct_estimated = 0.0;
  double mean_time_ms = 0.0;
};

/// Errors are over Success results only; buckets use all queries as the
/// denominator. Throws EmptyInput.
RelocMetrics compute_reloc_metrics(const std::vector<std::pair<RelocResult, Pose>>& results);

/// CSV header plus one row of RelocMetrics.
std::string format_reloc_metrics(const RelocMetrics& m);

}  // namespace vloc
