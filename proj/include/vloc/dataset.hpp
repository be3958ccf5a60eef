#pragma once

#include "vloc/geometry.hpp"
#include "vloc/simworld.hpp"
#include "vloc/image.hpp"
#include "vloc/trajectory.hpp"

#include <filesystem>
#include <vector>

namespace vloc {

/// `fx fy cx cy width height` on one line.
void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& K);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);

/// CSV `id,u,v,depth`.
void write_landmarks(const std::filesystem::path& path, const std::vector<LandmarkObservation>& lm);
std::vector<LandmarkObservation> read_landmarks(const std::filesystem::path& path);

/// A recorded run on disk:
///   intrinsics.txt, frames.csv (index,timestamp,x,y,z,qw,qx,qy,qz),
///   images/<i>.pgm, depth/<i>.f32, landmarks/<i>.csv,
///   odometry.csv, gt_trajectory.txt (TUM, odometry rate).
struct SegmentData {
  CameraIntrinsics K;
  Segment segment;
  std::vector<OdometrySample> odometry;
  Trajectory ground_truth;
};
void write_segment_dir(const std::filesystem::path& dir, const SegmentData& data);
SegmentData read_segment_dir(const std::filesystem::path& dir);

/// Relocalization benchmark:
///   intrinsics.txt, refs/poses.csv (i,x,y,z,qw,qx,qy,qz), refs/<i>.pgm,
///   refs/landmarks/<i>.csv, queries/gt_poses.csv (j,ref,x,y,z,qw,qx,qy,qz),
///   queries/<j>.pgm, queries/depth/<j>.f32, queries/landmarks/<j>.csv,
///   optional matches/<j>.csv for externally computed correspondences.
struct RelocRef {
  Pose pose;
  GrayImage image;
  std::vector<LandmarkObservation> landmarks;
};
struct RelocQuery {
  int ref = 0;
  Pose gt_pose;
  Observation observation;
};
struct RelocDataset {
  CameraIntrinsics K;
  std::vector<RelocRef> refs;
  std::vector<RelocQuery> queries;
};
void write_reloc_dataset(const std::filesystem::path& dir, const RelocDataset& data);
RelocDataset read_reloc_dataset(const std::filesystem::path& dir);

/// Reference views every `spacing` meters along `route`, looking along it,
/// each with one query offset by up to `max_offset` meters and `max_yaw`
/// radians (uniform, seeded). Query poses that collide are redrawn.
struct RelocGenOptions {
  double spacing = 2.0;
  double max_offset = 0.5;
  double max_yaw = 15.0 * 3.14159265358979 / 180.0;
  std::uint64_t seed = 0;
};
RelocDataset generate_reloc_dataset(const sim::SimWorld& world, const std::vector<Vec2>& route,
                                    const CameraIntrinsics& K, const RelocGenOptions& options = {});

}  // namespace vloc
