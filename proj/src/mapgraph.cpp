#include "vloc/mapgraph.hpp"

#include "vloc/errors.hpp"
#include "vloc/matching.hpp"
#include "vloc/random.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace vloc {

namespace {

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    return static_cast<std::size_t>(hash_combine(std::uint64_t(k.first), std::uint64_t(k.second)));
  }
};

}  // namespace

std::vector<std::pair<int, double>> TopoMetricMap::cng_neighbors(int id) const {
  std::vector<std::pair<int, double>> out;
  for (const CngEdge& e : cng_edges) {
    if (e.a == id) out.emplace_back(e.b, e.weight);
    if (e.b == id) out.emplace_back(e.a, e.weight);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> TopoMetricMap::cvg_neighbors(int id) const {
  std::vector<int> out;
  for (const CvgEdge& e : cvg_edges) {
    if (e.a == id) out.push_back(e.b);
    if (e.b == id) out.push_back(e.a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int TopoMetricMap::nearest_node(const Vec3& p) const {
  if (nodes.empty()) throw EmptyMap("nearest_node: map has no nodes");
  int best = nodes.front().id;
  double best_d = std::numeric_limits<double>::infinity();
  for (const MapNode& n : nodes) {
    const double d = (n.pose.translation() - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = n.id;
    }
  }
  return best;
}

void TopoMetricMap::validate() const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("map: node ids must be dense and ordered, found " +
                                  std::to_string(nodes[i].id) + " at " + std::to_string(i));
    }
    if (nodes[i].descriptor.size() != static_cast<std::size_t>(descriptor_dim)) {
      throw std::invalid_argument("map: node " + std::to_string(i) + " descriptor has wrong size");
    }
  }
  const int n = static_cast<int>(nodes.size());
  auto check = [&](int a, int b, const char* what) {
    if (!(a < b) || a < 0 || b >= n) {
      throw std::invalid_argument(std::string("map: bad ") + what + " edge (" + std::to_string(a) +
                                  ", " + std::to_string(b) + ")");
    }
  };
  for (const CngEdge& e : cng_edges) check(e.a, e.b, "cng");
  for (const CvgEdge& e : cvg_edges) check(e.a, e.b, "cvg");
}

CoverageSet coverage(const Observation& obs, const Pose& pose, const CameraIntrinsics& K,
                     double grid_res, const DepthRange& range) {
  if (!obs.has_depth()) throw NoDepth("coverage: observation has no depth image");
  if (!(grid_res > 0.0)) throw std::invalid_argument("coverage: grid_res must be positive");
  const Pose w_o = to_optical(pose);
  const Mat3 R = w_o.rotation_matrix();
  const Vec3& t = w_o.translation();
  CoverageSet cells;
  for (int v = 0; v < obs.depth.height; ++v) {
    for (int u = 0; u < obs.depth.width; ++u) {
      const double d = obs.depth.at(u, v);
      if (!range.contains(d)) continue;
      const Vec3 pw = R * unproject(K, Vec2(u, v), d, range) + t;
      cells.emplace_back(static_cast<std::int64_t>(std::floor(pw.x() / grid_res)),
                         static_cast<std::int64_t>(std::floor(pw.y() / grid_res)));
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

std::vector<std::size_t> select_keyframes(const std::vector<CoverageSet>& cover, std::size_t budget) {
  std::vector<std::size_t> picked;
  std::unordered_set<CellKey, CellHash> covered;
  std::vector<bool> used(cover.size(), false);
  while (picked.size() < budget) {
    std::size_t best = cover.size(), best_gain = 0;
    for (std::size_t i = 0; i < cover.size(); ++i) {
      if (used[i]) continue;
      std::size_t gain = 0;
      for (const CellKey& c : cover[i]) gain += covered.count(c) == 0;
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    if (best_gain == 0) break;
    used[best] = true;
    picked.push_back(best);
    covered.insert(cover[best].begin(), cover[best].end());
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<std::size_t> select_keyframes(const Segment& segment, const CameraIntrinsics& K,
                                          std::size_t budget, double grid_res) {
  if (budget < 1) throw std::invalid_argument("select_keyframes: keyframe budget must be >= 1");
  std::vector<CoverageSet> cover;
  cover.reserve(segment.size());
  for (const SegmentFrame& f : segment.frames) {
    cover.push_back(coverage(f.observation, f.pose, K, grid_res));
  }
  return select_keyframes(cover, budget);
}

std::vector<std::size_t> select_keyframes_geomonly(const Segment& segment, double voxel_res) {
  if (!(voxel_res > 0.0)) throw std::invalid_argument("select_keyframes_geomonly: voxel_res must be positive");
  std::set<std::array<std::int64_t, 3>> seen;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const Vec3& p = segment.frames[i].pose.translation();
    const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p.x() / voxel_res)),
                                          static_cast<std::int64_t>(std::floor(p.y() / voxel_res)),
                                          static_cast<std::int64_t>(std::floor(p.z() / voxel_res))};
    if (seen.insert(key).second) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<int>> cng_components(const TopoMetricMap& map) {
  const int n = static_cast<int>(map.nodes.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const CngEdge& e : map.cng_edges) {
    const int a = find(e.a), b = find(e.b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

BuildResult build_map(const Segment& segment, const std::vector<std::size_t>& keyframes,
                      const CameraIntrinsics& K, const Matcher& matcher,
                      const BuildOptions& options) {
  if (options.covis_threshold < 1 || !(options.nav_radius > 0.0)) {
    throw std::invalid_argument("build_map: thresholds must be positive");
  }
  BuildResult result;
  TopoMetricMap& map = result.map;
  map.grid_res = options.grid_res;
  map.intrinsics = K;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    const std::size_t i = keyframes[k];
    if (i >= segment.size()) {
      throw std::invalid_argument("build_map: keyframe index " + std::to_string(i) + " out of range");
    }
    const SegmentFrame& f = segment.frames[i];
    MapNode node;
    node.id = static_cast<int>(k);
    node.pose = f.pose;
    node.descriptor = extract_descriptor(f.observation.color);
    node.image = f.observation.color;
    if (f.observation.has_depth()) node.depth = f.observation.depth;
    node.landmarks = f.observation.landmarks;
    map.nodes.push_back(std::move(node));
  }

  const int n = static_cast<int>(map.nodes.size());
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const SegmentFrame& fb = segment.frames[keyframes[b]];
      const int count = static_cast<int>(matcher.match(map.nodes[a], fb.observation).size());
      if (count >= options.covis_threshold) map.cvg_edges.push_back({a, b, count});
    }
  }

  auto distance = [&](int a, int b) {
    return (map.nodes[a].pose.translation() - map.nodes[b].pose.translation()).norm();
  };
  if (options.cng_from_cvg) {
    for (const CvgEdge& e : map.cvg_edges) map.cng_edges.push_back({e.a, e.b, distance(e.a, e.b)});
  } else {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        const double d = distance(a, b);
        if (d > options.nav_radius) continue;
        if (options.navigable &&
            !options.navigable(map.nodes[a].pose.translation().head<2>(),
                               map.nodes[b].pose.translation().head<2>())) {
          continue;
        }
        map.cng_edges.push_back({a, b, d});
      }
    }
  }
  result.components = cng_components(map);
  return result;
}

GrownBuild build_map_connected(const Segment& segment, const CameraIntrinsics& K,
                               std::size_t budget, const Matcher& matcher,
                               const BuildOptions& options) {
  if (budget < 1) throw std::invalid_argument("build_map_connected: keyframe budget must be >= 1");
  std::vector<CoverageSet> cover;
  cover.reserve(segment.size());
  for (const SegmentFrame& f : segment.frames) {
    cover.push_back(coverage(f.observation, f.pose, K, options.grid_res));
  }
  GrownBuild out;
  for (out.budget = budget;; out.budget += std::max<std::size_t>(1, out.budget / 10)) {
    out.keyframes = select_keyframes(cover, out.budget);
    out.result = build_map(segment, out.keyframes, K, matcher, options);
    // Selection stopped short of the budget: nothing left to add.
    if (out.result.connected() || out.keyframes.size() < out.budget) break;
  }
  return out;
}

}  // namespace vloc
