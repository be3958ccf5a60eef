#pragma once

#include "vloc/geometry.hpp"
#include "vloc/image.hpp"
#include "vloc/random.hpp"
#include "vloc/trajectory.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vloc::sim {

/// Closed 2.5D grid world: occupied cells are wall boxes of `wall_height`
/// standing on the floor plane z = 0.
struct GridWorld {
  int width = 0;   // cells along x
  int height = 0;  // cells along y
  double cell_size = 1.0;
  double wall_height = 2.5;
  std::uint64_t texture_seed = 0;
  std::vector<std::uint8_t> occupancy;

  GridWorld() = default;
  GridWorld(int w, int h, double cell, double wall, std::uint64_t seed);

  /// Outside the grid counts as occupied.
  bool occupied(int ix, int iy) const;
  void set_occupied(int ix, int iy, bool value);
  int cell_x(double x) const { return static_cast<int>(std::floor(x / cell_size)); }
  int cell_y(double y) const { return static_cast<int>(std::floor(y / cell_size)); }
  Vec2 cell_center(int ix, int iy) const {
    return {(ix + 0.5) * cell_size, (iy + 0.5) * cell_size};
  }
  /// Throws std::invalid_argument unless boundary cells are occupied and the
  /// parameters are positive.
  void validate() const;
  bool operator==(const GridWorld&) const = default;
};

enum class Preset { Corridor, Rooms, Campus };
Preset parse_preset(const std::string& name);
std::string preset_name(Preset p);

/// A generated world plus a mapping route that visits it (out and back, so
/// both travel directions are imaged).
struct GeneratedWorld {
  GridWorld world;
  std::vector<Vec2> route;
};
GeneratedWorld generate_world(Preset preset, std::uint64_t seed);

/// World file: header `width height cell_size wall_height texture_seed`, then
/// `height` rows of `#`/`.`; the first row is the largest y.
void write_world(const std::filesystem::path& path, const GridWorld& world);
GridWorld read_world(const std::filesystem::path& path);

/// Waypoint CSV `x,y`.
void write_waypoints(const std::filesystem::path& path, const std::vector<Vec2>& wp);
std::vector<Vec2> read_waypoints(const std::filesystem::path& path);

/// Surface ids: kSky for no hit, kFloor for the floor plane, otherwise
/// 1 + 4 * cell_index + face with face 0:-x 1:+x 2:-y 3:+y.
constexpr std::int32_t kSky = -1;
constexpr std::int32_t kFloor = 0;

struct RayHit {
  double t = 0.0;  // ray parameter; equals optical depth for z-normalized rays
  std::int32_t surface = kSky;
  Vec3 point = Vec3::Zero();
};

struct Landmark {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
  std::int32_t surface = kSky;
};

/// Rendered frame: observation + per-pixel surface ids + ground truth.
struct SimFrame {
  Observation observation;
  Image<std::int32_t> surface;
  Pose gt_pose;
};

struct SimConfig {
  double camera_height = 0.5;
  double texel = 0.05;
  int landmarks_per_face = 8;
  DepthRange depth_range{};
};

class SimWorld {
 public:
  explicit SimWorld(GridWorld grid, SimConfig config = {});

  const GridWorld& grid() const { return grid_; }
  const SimConfig& config() const { return config_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }

  /// Exact ray/grid traversal (DDA) against wall boxes and the floor.
  RayHit cast(const Vec3& origin, const Vec3& dir) const;
  /// Texture intensity of a surface point.
  std::uint8_t texture(std::int32_t surface, const Vec3& point) const;

  /// Renders the camera at body pose `pose`. Throws PoseInCollision when the
  /// camera sits inside a wall.
  SimFrame render(const Pose& pose, const CameraIntrinsics& K) const;

  /// True when a disc of `radius` at (x, y) overlaps an occupied cell.
  bool disc_collides(const Vec2& center, double radius) const;
  /// Straight segment a->b keeps a disc of `clearance` out of walls.
  bool line_of_sight(const Vec2& a, const Vec2& b, double clearance) const;

  /// Body pose of a planar camera at (x, y) with heading `yaw`.
  Pose camera_pose(double x, double y, double yaw) const {
    return Pose::planar(x, y, config_.camera_height, yaw);
  }

 private:
  void build_landmarks();

  GridWorld grid_;
  SimConfig config_;
  std::vector<Landmark> landmarks_;
};

/// Odometry corruption. Translation noise and rotation noise scale with the
/// true motion, so a stationary robot reports an exact identity.
struct OdometryNoise {
  double trans_sigma = 0.0;   // std of translation error per meter travelled
  double rot_sigma = 0.0;     // std of heading error per radian turned
  double trans_bias = 0.0;    // multiplicative scale error on translation
  double yaw_bias = 0.0;      // heading drift, rad per meter travelled
  double yaw_sigma = 0.0;     // heading noise, rad per sqrt(meter)

  /// Drift profile used by the benchmarks: `rate` of distance travelled.
  static OdometryNoise drift(double rate);
};

struct StepResult {
  Pose gt_pose;
  Pose odom_delta;
  bool blocked = false;
};

class SimRobot {
 public:
  SimRobot(Pose start, OdometryNoise noise, std::uint64_t seed);

  double max_linear = 1.0;   // m/s
  double max_angular = 1.0;  // rad/s
  double radius = 0.2;       // collision disc, m

  const Pose& pose() const { return pose_; }
  /// Unicycle integration over `dt` with clipped commands. A colliding
  /// motion leaves the pose unchanged.
  StepResult step(const SimWorld& world, double v, double omega, double dt);

 private:
  Pose pose_;
  OdometryNoise noise_;
  Rng rng_;
};

struct SegmentRates {
  double odom_hz = 15.0;
  double camera_hz = 1.0;
  /// When positive, frames are captured every `frame_spacing` meters of
  /// travel instead of at camera_hz.
  double frame_spacing = 0.0;
  double max_speed = 1.0;
  double waypoint_timeout = 60.0;  // s
};

struct GeneratedSegment {
  Segment segment;
  Trajectory ground_truth;              // at odometry rate
  std::vector<OdometrySample> odometry;  // noisy increments at odometry rate
};

/// Drives a robot through `waypoints` with a pursuit controller, rendering
/// frames and reporting odometry. The first waypoint is the start position;
/// the initial heading faces the second waypoint. Throws UnreachableWaypoint.
GeneratedSegment generate_segment(const SimWorld& world, const std::vector<Vec2>& waypoints,
                                  const CameraIntrinsics& K, const SegmentRates& rates,
                                  const OdometryNoise& noise, std::uint64_t seed);

/// Grid shortest route between two points keeping one free cell of clearance
/// where possible; returns simplified waypoint polyline including endpoints.
std::vector<Vec2> grid_route(const GridWorld& world, const Vec2& from, const Vec2& to);

}  // namespace vloc::sim
