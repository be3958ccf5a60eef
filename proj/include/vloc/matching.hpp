#pragma once

#include "vloc/image.hpp"
#include "vloc/mapgraph.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <vector>

namespace vloc {

namespace sim {
class SimWorld;
}

struct Correspondence {
  Vec2 uv_ref = Vec2::Zero();
  Vec2 uv_query = Vec2::Zero();
  double confidence = 1.0;
  bool operator==(const Correspondence&) const = default;
};

struct MatchSet {
  int reference_node_id = -1;
  std::vector<Correspondence> correspondences;
  std::size_t size() const { return correspondences.size(); }
  bool operator==(const MatchSet&) const = default;
};

struct ClassicalParams {
  int max_corners = 500;
  int nms_radius = 5;
  int patch_radius = 5;  // 11x11 patches
  double ratio = 0.8;
  double harris_k = 0.04;
  /// Corners below this fraction of the strongest response are dropped.
  double min_response = 1e-3;
};

struct Feature {
  Vec2 pixel;
  double response = 0.0;
  std::vector<float> patch;  // zero mean, unit norm
};

/// Harris corners (top N by response after non-max suppression) with
/// normalized patch descriptors. Order: response descending, then row-major
/// pixel order.
std::vector<Feature> detect_features(const GrayImage& img, const ClassicalParams& p = {});

/// Mutual nearest neighbours with a Lowe ratio test on patch distances.
MatchSet match_features(const std::vector<Feature>& ref, const std::vector<Feature>& query,
                        const ClassicalParams& p = {});
MatchSet match_classical(const GrayImage& ref, const GrayImage& query,
                         const ClassicalParams& p = {});

struct OracleParams {
  double outlier_rate = 0.0;  // in [0, 1)
  double noise_px = 0.0;
  std::uint64_t seed = 0;
};

/// Pairs landmark observations sharing an id, adds pixel noise, and replaces
/// floor(outlier_rate * n) matches (chosen by a seeded shuffle) with uniform
/// random query pixels. Noisy pixels are clamped into the image.
MatchSet match_oracle(const std::vector<LandmarkObservation>& ref,
                      const std::vector<LandmarkObservation>& query, const CameraIntrinsics& K,
                      const OracleParams& p);

/// Header `u_ref,v_ref,u_query,v_query,confidence`, 9 significant digits.
void write_matches(const std::filesystem::path& path, const MatchSet& m);
/// Throws FormatError, or OutOfBounds naming the row. Matches below
/// `min_conf` are dropped.
MatchSet ingest_matches(const std::filesystem::path& path, const CameraIntrinsics& K,
                        double min_conf = 0.0);

/// Correspondence source used by mapping and localization.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual MatchSet match(const MapNode& ref, const Observation& query) const = 0;
};

class ClassicalMatcher : public Matcher {
 public:
  explicit ClassicalMatcher(ClassicalParams p = {}) : params_(p) {}
  MatchSet match(const MapNode& ref, const Observation& query) const override;

 private:
  const std::vector<Feature>& features(const GrayImage& img) const;

  ClassicalParams params_;
  // Keyed by image content hash; detection dominates the cost of CvG building.
  mutable std::map<std::uint64_t, std::vector<Feature>> cache_;
};

/// Simulator-backed matcher. Reference landmarks come from the node itself
/// when present, otherwise from rendering the world at the node pose.
class OracleMatcher : public Matcher {
 public:
  OracleMatcher(const sim::SimWorld* world, CameraIntrinsics K, OracleParams p = {});
  MatchSet match(const MapNode& ref, const Observation& query) const override;

 private:
  const sim::SimWorld* world_;
  CameraIntrinsics K_;
  OracleParams params_;
  mutable std::map<std::uint64_t, std::vector<LandmarkObservation>> rendered_;
};

}  // namespace vloc
