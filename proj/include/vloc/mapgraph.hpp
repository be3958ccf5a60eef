#pragma once

#include "vloc/geometry.hpp"
#include "vloc/image.hpp"
#include "vloc/retrieval.hpp"
#include "vloc/trajectory.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace vloc {

class Matcher;

struct MapNode {
  int id = 0;
  Pose pose;  // world-frame body pose of the camera
  Descriptor descriptor;
  std::optional<GrayImage> image;
  std::optional<DepthImage> depth;
  /// Simulator annotations; kept in memory only, never written to disk.
  std::vector<LandmarkObservation> landmarks;

  bool operator==(const MapNode& o) const {
    return id == o.id && pose == o.pose && descriptor == o.descriptor && image == o.image &&
           depth == o.depth;
  }
};

struct CngEdge {
  int a = 0;
  int b = 0;
  double weight = 0.0;  // meters
  bool operator==(const CngEdge&) const = default;
};

struct CvgEdge {
  int a = 0;
  int b = 0;
  int count = 0;  // correspondences
  bool operator==(const CvgEdge&) const = default;
};

/// Two-level topo-metric map. Edges are stored once with a < b and kept
/// sorted by (a, b).
struct TopoMetricMap {
  int descriptor_dim = kDescriptorDim;
  double grid_res = 0.1;
  std::optional<CameraIntrinsics> intrinsics;
  std::vector<MapNode> nodes;
  std::vector<CngEdge> cng_edges;
  std::vector<CvgEdge> cvg_edges;

  std::vector<std::pair<int, double>> cng_neighbors(int id) const;
  std::vector<int> cvg_neighbors(int id) const;
  /// Node with the smallest Euclidean distance to `p`, lowest id on ties.
  /// Throws EmptyMap.
  int nearest_node(const Vec3& p) const;
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
  bool operator==(const TopoMetricMap&) const = default;
};

using CellKey = std::pair<std::int64_t, std::int64_t>;
/// Sorted, duplicate-free set of occupied 2D cells.
using CoverageSet = std::vector<CellKey>;

/// Cells hit by unprojecting every valid depth pixel of the frame into the
/// world. Throws NoDepth.
CoverageSet coverage(const Observation& obs, const Pose& pose, const CameraIntrinsics& K,
                     double grid_res, const DepthRange& range = {});

/// Greedy max-coverage over precomputed coverage sets: repeatedly take the
/// frame adding the most new cells, lowest index on ties, stop at `budget`
/// frames or zero gain. Result is sorted ascending.
std::vector<std::size_t> select_keyframes(const std::vector<CoverageSet>& cover, std::size_t budget);
std::vector<std::size_t> select_keyframes(const Segment& segment, const CameraIntrinsics& K,
                                          std::size_t budget, double grid_res);

/// Depth-free fallback: first frame landing in each voxel of side `voxel_res`.
std::vector<std::size_t> select_keyframes_geomonly(const Segment& segment, double voxel_res);

struct BuildOptions {
  int covis_threshold = 50;
  double nav_radius = 3.0;
  /// Copy the CvG into the CnG (with distance weights) instead of using
  /// proximity.
  bool cng_from_cvg = false;
  /// Optional navigability test between two node positions.
  std::function<bool(const Vec2&, const Vec2&)> navigable;
  double grid_res = 0.1;
};

struct BuildResult {
  TopoMetricMap map;
  /// CnG connected components, each sorted, ordered by smallest id. A
  /// single component means the map is connected.
  std::vector<std::vector<int>> components;
  bool connected() const { return components.size() <= 1; }
};

BuildResult build_map(const Segment& segment, const std::vector<std::size_t>& keyframes,
                      const CameraIntrinsics& K, const Matcher& matcher,
                      const BuildOptions& options = {});

/// Keyframe selection plus build_map, growing the budget by 10% (at least
/// one frame) while the CnG stays disconnected and selection can still add
/// frames. Coverage never asks for connectivity, so a tight budget can leave
/// gaps along the route.
struct GrownBuild {
  BuildResult result;
  std::vector<std::size_t> keyframes;
  std::size_t budget = 0;
};
GrownBuild build_map_connected(const Segment& segment, const CameraIntrinsics& K,
                               std::size_t budget, const Matcher& matcher,
                               const BuildOptions& options = {});

/// Connected components of the CnG.
std::vector<std::vector<int>> cng_components(const TopoMetricMap& map);

struct StorageReport {
  std::uintmax_t descriptors = 0;
  std::uintmax_t images = 0;
  std::uintmax_t manifests = 0;
  std::uintmax_t total() const { return descriptors + images + manifests; }
};

/// Writes the version 1 map directory. Returns the byte counts written.
StorageReport save_map(const TopoMetricMap& map, const std::filesystem::path& dir);
/// Throws FormatError (with file and line or offset) or VersionMismatch.
TopoMetricMap load_map(const std::filesystem::path& dir);

}  // namespace vloc
