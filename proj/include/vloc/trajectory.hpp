#pragma once

#include "vloc/geometry.hpp"
#include "vloc/image.hpp"

#include <filesystem>
#include <vector>

namespace vloc {

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
  bool operator==(const TimedPose&) const = default;
};

using Trajectory = std::vector<TimedPose>;

/// One geo-tagged frame of a mapping run.
struct SegmentFrame {
  Observation observation;
  Pose pose;
  double timestamp = 0.0;
};

/// Ordered frames with strictly increasing timestamps.
struct Segment {
  std::vector<SegmentFrame> frames;

  bool empty() const { return frames.empty(); }
  std::size_t size() const { return frames.size(); }
  /// Throws std::invalid_argument on non-increasing timestamps or non-finite poses.
  void validate() const;
};

/// Odometry increment reported at `timestamp` (body frame, relative).
struct OdometrySample {
  double timestamp = 0.0;
  Pose delta;
};

/// TUM text: `timestamp x y z qw qx qy qz`, 17 significant digits.
void write_tum(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_tum(const std::filesystem::path& path);

/// CSV `timestamp,x,y,z,qw,qx,qy,qz` for odometry increments.
void write_odometry_csv(const std::filesystem::path& path, const std::vector<OdometrySample>& odom);
std::vector<OdometrySample> read_odometry_csv(const std::filesystem::path& path);

struct AteReport {
  double rmse = 0.0;
  std::vector<double> errors;
  std::size_t matched = 0;
};

/// Absolute trajectory error without any alignment: both trajectories live in
/// the map frame. Estimated poses are associated to the ground-truth pose
/// with the nearest timestamp within `max_dt`. Throws NoMatches.
AteReport compute_ate(const Trajectory& gt, const Trajectory& est, double max_dt);

}  // namespace vloc
