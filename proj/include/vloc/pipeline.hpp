#pragma once

#include "vloc/mapgraph.hpp"
#include "vloc/matching.hpp"
#include "vloc/poseslam.hpp"
#include "vloc/relocal.hpp"
#include "vloc/trajectory.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vloc {

enum class Mode { Lost, Tracking };
std::string mode_name(Mode m);

struct PipelineConfig {
  double gl_min_sim = 0.5;
  int max_failures = 5;
  std::size_t window = 20;
  PnpParams pnp;
  LmParams lm;
  double prior_sigma_t = 0.1;                         // m
  double prior_sigma_r = 2.0 * 3.14159265358979 / 180.0;  // rad
  double odom_sigma_t = 0.02;                         // m per step
  double odom_sigma_t_rel = 0.01;                     // fraction of step length
  double odom_sigma_r = 0.5 * 3.14159265358979 / 180.0;  // rad per step
  /// Candidate nodes must face within this angle of the current heading
  /// (radians); falls back to all nodes when none qualify.
  double heading_gate = 60.0 * 3.14159265358979 / 180.0;
};

struct FrameLog {
  double timestamp = 0.0;
  Mode mode = Mode::Lost;
  int reference_node = -1;
  std::size_t inliers = 0;
  std::size_t total = 0;
  std::string status;
  double sim_top1 = 0.0;
};

/// GL -> LL -> PS orchestration. All inputs must arrive in timestamp order.
class Pipeline {
 public:
  Pipeline(const TopoMetricMap& map, const Matcher& matcher, CameraIntrinsics K,
           PipelineConfig config = {});

  /// Returns the world-frame fix when local localization succeeds.
  std::optional<Pose> on_observation(const Observation& obs, double timestamp);
  /// Propagates the fused pose. Throws NotLocalized while Lost (the motion
  /// is still chained internally).
  Pose on_odometry(const Pose& delta, double timestamp);

  Mode mode() const { return mode_; }
  int consecutive_failures() const { return failures_; }
  std::optional<Pose> prior_pose() const { return prior_; }
  const FusionGraph& fusion() const { return graph_; }
  /// Latest fused pose per timestamp, emitted causally.
  const Trajectory& trajectory() const { return emitted_; }
  const std::vector<FrameLog>& log() const { return log_; }
  /// The full-history batch re-solve of the current graph.
  Trajectory batch_trajectory() const;

 private:
  std::optional<Pose> try_local(const Observation& obs, double timestamp, const Descriptor& q,
                                FrameLog& entry);
  void emit(double timestamp);
  Vec6 prior_sigmas(std::size_t inliers) const;
  Vec6 odom_sigmas(const Pose& delta) const;

  const TopoMetricMap& map_;
  const Matcher& matcher_;
  CameraIntrinsics K_;
  PipelineConfig cfg_;
  Mode mode_ = Mode::Lost;
  std::optional<Pose> prior_;
  int failures_ = 0;
  FusionGraph graph_;
  double last_time_ = -std::numeric_limits<double>::infinity();
  Trajectory emitted_;
  std::vector<FrameLog> log_;
};

/// `timestamp,mode,reference_node,inliers,total,status,sim_top1`
void write_frame_log(const std::filesystem::path& path, const std::vector<FrameLog>& log);

}  // namespace vloc
