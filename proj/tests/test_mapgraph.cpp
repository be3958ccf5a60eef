#include "doctest.h"
#include "sim_fixtures.hpp"
#include "test_helpers.hpp"
#include "vloc/errors.hpp"
#include "vloc/mapgraph.hpp"

#include <array>
#include <fstream>
#include <map>
#include <set>

using namespace vloc;

namespace {

const CameraIntrinsics kK;

CoverageSet cells(std::initializer_list<int> xs) {
  CoverageSet c;
  for (int x : xs) c.emplace_back(x, 0);
  return c;
}

std::size_t union_size(const std::vector<CoverageSet>& cover, const std::vector<std::size_t>& pick) {
  std::set<CellKey> u;
  for (std::size_t i : pick) u.insert(cover[i].begin(), cover[i].end());
  return u.size();
}

/// Best union over all subsets of size <= budget.
std::size_t exhaustive_opt(const std::vector<CoverageSet>& cover, std::size_t budget) {
  std::size_t best = 0;
  const std::size_t n = cover.size();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) > budget) continue;
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) pick.push_back(i);
    best = std::max(best, union_size(cover, pick));
  }
  return best;
}

Segment segment_at(const std::vector<Vec3>& positions) {
  Segment s;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    SegmentFrame f;
    f.pose = Pose::translation_only(positions[i]);
    f.timestamp = double(i);
    s.frames.push_back(f);
  }
  return s;
}

const testing::Taught& corridor_map() {
  static const auto t = testing::teach(sim::Preset::Corridor, 2, 20);
  return *t;
}

}  // namespace

TEST_CASE("coverage examples") {
  SUBCASE("all-invalid depth is empty") {
    Observation obs;
    obs.color = GrayImage(128, 128);
    obs.depth = DepthImage(128, 128, 0.0);
    CHECK(coverage(obs, Pose(), kK, 0.1).empty());
  }
  SUBCASE("single pixel") {
    Observation obs;
    obs.color = GrayImage(128, 128);
    obs.depth = DepthImage(128, 128, 0.0);
    obs.depth.at(64, 64) = 1.05;
    // Principal ray looks along body x from (0, 2.33, 0.5).
    const CoverageSet c = coverage(obs, Pose::translation_only({0.0, 2.33, 0.5}), kK, 0.1);
    CHECK(c == CoverageSet{{10, 23}});
  }
  SUBCASE("missing depth") {
    Observation obs;
    obs.color = GrayImage(8, 8);
    CHECK_THROWS_AS(coverage(obs, Pose(), kK, 0.1), NoDepth);
  }
}

TEST_CASE("coverage matches a per-pixel reimplementation on a simulator frame") {
  const auto gw = sim::generate_world(sim::Preset::Corridor, 4);
  const sim::SimWorld w(gw.world);
  const Pose pose = w.camera_pose(gw.route[0].x(), gw.route[0].y(), 0.4);
  const Observation obs = w.render(pose, kK).observation;

  // Optical axes written out by hand: z forward is body x, x right is body -y,
  // y down is body -z.
  const Mat3 R = pose.rotation_matrix();
  const Vec3 fwd = R.col(0), right = -R.col(1), down = -R.col(2);
  std::set<CellKey> oracle;
  for (int v = 0; v < obs.depth.height; ++v) {
    for (int u = 0; u < obs.depth.width; ++u) {
      const double d = obs.depth.at(u, v);
      if (!(d > 0.05 && d < 20.0)) continue;
      const Vec3 p = pose.translation() + d * fwd + d * (u - kK.cx) / kK.fx * right + d * (v - kK.cy) / kK.fy * down;
      oracle.emplace(std::int64_t(std::floor(p.x() / 0.1)), std::int64_t(std::floor(p.y() / 0.1)));
    }
  }
  const CoverageSet c = coverage(obs, pose, kK, 0.1);
  REQUIRE(c.size() > 100);
  std::size_t mismatched = 0;
  for (const CellKey& k : c) mismatched += oracle.count(k) == 0;
  MESSAGE(c.size() << " cells, oracle " << oracle.size() << ", differing " << mismatched);
  // Wall hits sit exactly on cell borders, so a last-bit rounding difference
  // may flip a handful of cells between the two formulations.
  CHECK(mismatched <= c.size() / 100);
  CHECK(std::max(c.size(), oracle.size()) - std::min(c.size(), oracle.size()) <= c.size() / 100);
}

TEST_CASE("greedy selection examples") {
  const std::vector<CoverageSet> abc{cells({1, 2, 3}), cells({3, 4, 5}), cells({6})};
  CHECK(select_keyframes(abc, 2) == std::vector<std::size_t>{0, 1});
  CHECK(union_size(abc, {0, 1}) == 5);
  CHECK(exhaustive_opt(abc, 2) == 5);
  CHECK(select_keyframes(abc, 5) == std::vector<std::size_t>{0, 1, 2});

  const std::vector<CoverageSet> same(4, cells({1, 2}));
  CHECK(select_keyframes(same, 3) == std::vector<std::size_t>{0});

  // Equal gains go to the lower index; output is sorted.
  const std::vector<CoverageSet> tie{cells({9}), cells({1, 2}), cells({3, 4})};
  CHECK(select_keyframes(tie, 1) == std::vector<std::size_t>{1});
  CHECK(select_keyframes(tie, 3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("greedy reaches (1 - 1/e) of the optimum on random instances") {
  Rng rng(2024);
  const double bound = 1.0 - std::exp(-1.0);
  double worst = 1.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<CoverageSet> cover(n);
    for (auto& c : cover) {
      std::set<CellKey> s;
      const std::size_t k = rng.index(8);
      for (std::size_t j = 0; j < k; ++j) s.emplace(std::int64_t(rng.index(20)), std::int64_t(rng.index(3)));
      c.assign(s.begin(), s.end());
    }
    const std::size_t budget = 1 + rng.index(n);
    const auto pick = select_keyframes(cover, budget);
    CHECK(pick == select_keyframes(cover, budget));
    CHECK(pick.size() <= budget);
    const std::size_t opt = exhaustive_opt(cover, budget);
    if (opt > 0) worst = std::min(worst, double(union_size(cover, pick)) / double(opt));
  }
  CHECK(worst >= bound);
}

TEST_CASE("geometry-only selection") {
  CHECK(select_keyframes_geomonly(segment_at({{0, 0, 0}, {0.01, 0, 0}, {0.02, 0, 0}}), 1.0) ==
        std::vector<std::size_t>{0});
  CHECK(select_keyframes_geomonly(segment_at({{0, 0, 0}, {1.5, 0, 0}, {3.0, 0, 0}}), 1.0) ==
        std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(select_keyframes_geomonly(segment_at({{0, 0, 0}}), 0.0), std::invalid_argument);

  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec3> pos;
    for (int i = 0; i < 100; ++i) pos.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 1));
    const double res = rng.uniform(0.3, 2.0);
    std::map<std::array<long, 3>, std::size_t> first;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const std::array<long, 3> key{long(std::floor(pos[i].x() / res)), long(std::floor(pos[i].y() / res)),
                                    long(std::floor(pos[i].z() / res))};
      first.emplace(key, i);
    }
    std::vector<std::size_t> expected;
    for (const auto& [key, i] : first) expected.push_back(i);
    std::sort(expected.begin(), expected.end());
    CHECK(select_keyframes_geomonly(segment_at(pos), res) == expected);
  }
}

TEST_CASE("build_map small cases") {
  const auto gw = sim::generate_world(sim::Preset::Corridor, 4);
  const sim::SimWorld w(gw.world);
  const OracleMatcher matcher(&w, kK);
  const Pose pose = w.camera_pose(gw.route[0].x(), gw.route[0].y(), 0.0);
  Segment seg;
  for (int i = 0; i < 2; ++i) {
    const sim::SimFrame f = w.render(pose, kK);
    seg.frames.push_back({f.observation, pose, double(i)});
  }

  const BuildResult one = build_map(seg, {0}, kK, matcher);
  CHECK(one.map.nodes.size() == 1);
  CHECK(one.map.cng_edges.empty());
  CHECK(one.map.cvg_edges.empty());
  CHECK(one.connected());

  const BuildResult two = build_map(seg, {0, 1}, kK, matcher);
  REQUIRE(two.map.cvg_edges.size() == 1);
  CHECK(two.map.cvg_edges[0].count >= 50);
  REQUIRE(two.map.cng_edges.size() == 1);
  CHECK(two.map.cng_edges[0].weight == 0.0);

  // Far apart: nothing connects, and the partition is reported.
  Segment apart = seg;
  apart.frames[1].pose = Pose::translation_only({100, 0, 0.5});
  const BuildResult split = build_map(apart, {0, 1}, kK, matcher, {});
  CHECK(split.components == std::vector<std::vector<int>>{{0}, {1}});
  CHECK_FALSE(split.connected());

  CHECK_THROWS_AS(build_map(seg, {5}, kK, matcher), std::invalid_argument);
}

TEST_CASE("corridor map from a simulated run") {
  const auto& t = corridor_map();
  const Segment& seg = t.run.segment;
  // Every 4th frame is 2 m apart, inside the 3 m navigation radius.
  std::vector<std::size_t> kf;
  for (std::size_t i = 0; i < seg.size() && kf.size() < 20; i += 4) kf.push_back(i);
  REQUIRE(kf.size() == 20);
  const BuildResult r = build_map(seg, kf, t.K, t.matcher);
  const TopoMetricMap& m = r.map;
  CHECK(m.nodes.size() == 20);
  for (int i = 0; i + 1 < 20; ++i) {
    const auto nb = m.cng_neighbors(i);
    CHECK(std::any_of(nb.begin(), nb.end(), [&](const auto& e) { return e.first == i + 1; }));
  }
  for (const CngEdge& e : m.cng_edges) {
    CHECK(e.a < e.b);
    CHECK(std::abs(e.weight - (m.nodes[e.a].pose.translation() - m.nodes[e.b].pose.translation()).norm()) <= 1e-9);
  }
  for (const MapNode& n : m.nodes) {
    double s = 0.0;
    for (float x : n.descriptor) s += double(x) * x;
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
  }
  CHECK_NOTHROW(m.validate());

  BuildOptions copy;
  copy.cng_from_cvg = true;
  const BuildResult same = build_map(seg, kf, t.K, t.matcher, copy);
  REQUIRE(same.map.cng_edges.size() == same.map.cvg_edges.size());
  for (std::size_t i = 0; i < same.map.cvg_edges.size(); ++i) {
    CHECK(same.map.cng_edges[i].a == same.map.cvg_edges[i].a);
    CHECK(same.map.cng_edges[i].b == same.map.cvg_edges[i].b);
  }
}

TEST_CASE("budget grows until the map is connected") {
  const auto& t = corridor_map();
  CHECK(t.build.result.connected());
  CHECK(t.build.budget >= 20);
  CHECK(t.build.keyframes == select_keyframes(t.run.segment, t.K, t.build.budget, 0.1));
}

TEST_CASE("map save and load") {
  const auto dir = testing::temp_dir("mapio");
  namespace fs = std::filesystem;

  SUBCASE("empty map") {
    const TopoMetricMap m;
    const StorageReport rep = save_map(m, dir / "empty");
    CHECK(rep.images == 0);
    CHECK(load_map(dir / "empty") == m);
  }
  SUBCASE("random maps round-trip and report true sizes") {
    Rng rng(77);
    for (int i = 0; i < 100; ++i) {
      const TopoMetricMap m = testing::random_map(rng);
      const fs::path d = dir / ("m" + std::to_string(i));
      const StorageReport rep = save_map(m, d);
      const TopoMetricMap back = load_map(d);
      CHECK(back == m);
      CHECK(rep.descriptors == fs::file_size(d / "descriptors.f32"));
      std::uintmax_t img = 0;
      for (const char* sub : {"images", "depth"})
        if (fs::exists(d / sub))
          for (const auto& e : fs::directory_iterator(d / sub)) img += e.file_size();
      CHECK(rep.images == img);
    }
  }
  SUBCASE("simulated map descriptors are byte identical after a round trip") {
    const TopoMetricMap& m = corridor_map().map();
    save_map(m, dir / "a");
    save_map(load_map(dir / "a"), dir / "b");
    CHECK(file_fnv1a(dir / "a" / "descriptors.f32") == file_fnv1a(dir / "b" / "descriptors.f32"));
    CHECK(file_fnv1a(dir / "a" / "nodes.csv") == file_fnv1a(dir / "b" / "nodes.csv"));
  }
  SUBCASE("corrupt inputs") {
    Rng rng(5);
    TopoMetricMap m;
    while (m.nodes.size() < 2) m = testing::random_map(rng);
    save_map(m, dir / "c");
    fs::resize_file(dir / "c" / "descriptors.f32", fs::file_size(dir / "c" / "descriptors.f32") - 4);
    try {
      load_map(dir / "c");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("descriptors.f32") != std::string::npos);
    }

    save_map(m, dir / "v");
    std::string text;
    {
      std::ifstream in(dir / "v" / "manifest.txt");
      text.assign(std::istreambuf_iterator<char>(in), {});
    }
    text.replace(text.find("version=1"), 9, "version=7");
    std::ofstream(dir / "v" / "manifest.txt") << text;
    CHECK_THROWS_AS(load_map(dir / "v"), VersionMismatch);

    save_map(m, dir / "n");
    std::ofstream(dir / "n" / "nodes.csv", std::ios::app) << "9,1,2,zz,1,0,0,0\n";
    try {
      load_map(dir / "n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("nodes.csv:") != std::string::npos);
    }
  }
}
