#pragma once

#include "vloc/mapgraph.hpp"
#include "vloc/matching.hpp"
#include "vloc/pipeline.hpp"
#include "vloc/simworld.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vloc {

struct GlobalPlan {
  std::vector<int> node_path;
  std::size_t subgoal_index = 0;
  double cost = 0.0;  // summed CnG weights
};

/// Dijkstra on the CnG; the queue pops (distance, id) in lexicographic order.
/// Throws NoPath or std::out_of_range for unknown nodes.
GlobalPlan plan_global(const TopoMetricMap& map, int start_node, int goal_node);

struct GoalMatch {
  int node = -1;
  double similarity = 0.0;
};
/// Top-1 retrieval of the goal image. Throws EmptyMap.
GoalMatch resolve_goal(const TopoMetricMap& map, const GrayImage& goal_image);

struct NavParams {
  double switch_radius = 1.0;
  double goal_radius = 0.5;    // success test on ground truth
  double arrive_radius = 0.25; // Done test on the estimate
  double robot_radius = 0.3;
  std::vector<double> curvatures{0.0, 0.2, -0.2, 0.5, -0.5, 1.0, -1.0};
  double primitive_length = 2.0;
  double sample_step = 0.1;
  double curvature_cost = 0.1;  // lambda
  double max_linear = 0.8;
  double max_angular = 1.0;
  /// Subgoals further off-axis than this trigger rotate-in-place.
  double rotate_bearing = 60.0 * 3.14159265358979 / 180.0;
  double camera_height = 0.5;
  double obstacle_min_height = 0.1;  // above the floor
  int depth_stride = 2;
};

/// Advances the cursor past subgoals closer than switch_radius and returns
/// the current subgoal in the robot frame, or nullopt (Done) once the final
/// node is within arrive_radius.
std::optional<Vec3> next_subgoal(GlobalPlan& plan, const TopoMetricMap& map,
                                 const Pose& robot_pose, const NavParams& params);

struct Primitive {
  double curvature = 0.0;
  std::vector<Vec2> samples;  // robot frame, excluding the origin
};
/// Constant-curvature arcs of length `length` sampled every `ds`.
Primitive make_arc(double curvature, double length, double ds);

struct LocalCommand {
  double v = 0.0;
  double omega = 0.0;
  int primitive = -1;  // index into curvatures; -1 for rotate-in-place
};

/// Robot-frame obstacle points (x, y) from a depth image.
std::vector<Vec2> obstacle_points(const DepthImage& depth, const CameraIntrinsics& K,
                                  const NavParams& params);
bool arc_collides(const Primitive& arc, const std::vector<Vec2>& obstacles, double radius);

/// Scores the primitive fan against a single depth frame. Arcs are cut to
/// the subgoal distance when it is shorter than the primitive length.
LocalCommand plan_local(const DepthImage& depth, const CameraIntrinsics& K, const Vec3& subgoal,
                        const NavParams& params);

struct NavConfig {
  NavParams params;
  PipelineConfig pipeline;
  sim::OdometryNoise odometry = sim::OdometryNoise::drift(0.02);
  double odom_hz = 15.0;
  double plan_hz = 5.0;
  double vloc_hz = 1.0;
  double goal_timeout = 180.0;  // model seconds per goal
};

struct NavGoalReport {
  int goal_index = 0;
  int goal_node = -1;
  double similarity = 0.0;
  bool success = false;
  double time = 0.0;          // model seconds
  double path_length = 0.0;   // ground truth meters
  double shortest_path = 0.0; // CnG meters from the start node
  double final_error = 0.0;   // ground-truth distance to the goal node
  std::string status;         // Success, Missed, Timeout, NoPath
};

struct NavReport {
  std::vector<NavGoalReport> goals;
  Trajectory estimated;
  Trajectory ground_truth;
  std::vector<FrameLog> frames;
  bool all_success() const;
};

/// Closed loop render -> pipeline -> subgoal -> local plan -> step over a
/// sequence of goal images, starting from `start` (body pose).
NavReport run_mission(const sim::SimWorld& world, const TopoMetricMap& map,
                      const std::vector<GrayImage>& goal_images, const Pose& start,
                      const Matcher& matcher, const CameraIntrinsics& K, const NavConfig& config,
                      std::uint64_t seed);

NavGoalReport run_navigation(const sim::SimWorld& world, const TopoMetricMap& map,
                             const GrayImage& goal_image, const Pose& start,
                             const Matcher& matcher, const CameraIntrinsics& K,
                             const NavConfig& config, std::uint64_t seed);

/// Goal nodes for a mission: each pick is the node farthest from the start
/// and all earlier picks (farthest-point order, lower id on ties).
std::vector<int> spread_goal_nodes(const TopoMetricMap& map, const Vec3& start, std::size_t count);

void write_nav_report(const std::filesystem::path& path, const NavReport& report);

}  // namespace vloc
