#include "doctest.h"
#include "sim_fixtures.hpp"
#include "test_helpers.hpp"
#include "vloc/errors.hpp"
#include "vloc/retrieval.hpp"

#include <algorithm>
#include <cmath>

using namespace vloc;

namespace {

TopoMetricMap map_of(const std::vector<Descriptor>& ds) {
  TopoMetricMap m;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    MapNode n;
    n.id = static_cast<int>(i);
    n.descriptor = ds[i];
    m.nodes.push_back(n);
  }
  return m;
}

Descriptor random_descriptor(Rng& rng) {
  Descriptor d(kDescriptorDim);
  double s = 0.0;
  for (float& x : d) {
    x = static_cast<float>(rng.normal());
    s += double(x) * x;
  }
  for (float& x : d) x = static_cast<float>(x / std::sqrt(s));
  return d;
}

const sim::GeneratedWorld& corridor() {
  static const sim::GeneratedWorld gw = sim::generate_world(sim::Preset::Corridor, 3);
  return gw;
}

/// A free camera pose on the mapping route, looking roughly along it.
Pose route_pose(const sim::SimWorld& w, const std::vector<Vec2>& route, Rng& rng) {
  for (;;) {
    const std::size_t i = 1 + rng.index(route.size() - 1);
    const Vec2 p = route[i - 1] + rng.uniform() * (route[i] - route[i - 1]);
    const Vec2 d = route[i] - route[i - 1];
    if (d.norm() < 1e-9 || w.disc_collides(p, 0.2)) continue;
    return w.camera_pose(p.x(), p.y(), std::atan2(d.y(), d.x()) + rng.uniform(-0.3, 0.3));
  }
}

}  // namespace

TEST_CASE("descriptor is unit norm and deterministic") {
  const sim::SimWorld w(corridor().world);
  Rng rng(2);
  const GrayImage img = w.render(route_pose(w, corridor().route, rng), CameraIntrinsics{}).observation.color;
  const Descriptor a = extract_descriptor(img), b = extract_descriptor(img);
  REQUIRE(a.size() == std::size_t(kDescriptorDim));
  CHECK(a == b);
  double n = 0.0;
  for (float x : a) n += double(x) * x;
  CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  CHECK(similarity(a, b) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("constant image falls back to e0") {
  const Descriptor d = extract_descriptor(GrayImage(64, 48, 128));
  CHECK(d[0] == 1.0f);
  CHECK(std::all_of(d.begin() + 1, d.end(), [](float x) { return x == 0.0f; }));
  CHECK_THROWS_AS(extract_descriptor(GrayImage()), EmptyImage);
}

TEST_CASE("descriptor survives sensor noise") {
  const sim::SimWorld w(corridor().world);
  Rng rng(21);
  double worst = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const GrayImage img = w.render(route_pose(w, corridor().route, rng), CameraIntrinsics{}).observation.color;
    GrayImage noisy = img;
    for (auto& px : noisy.data) px = static_cast<std::uint8_t>(std::clamp(std::lround(px + rng.normal(0.0, 5.0)), 0L, 255L));
    worst = std::min(worst, similarity(extract_descriptor(img), extract_descriptor(noisy)));
  }
  CHECK(worst > 0.9);
}

TEST_CASE("similarity is symmetric bit for bit") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Descriptor a = random_descriptor(rng), b = random_descriptor(rng);
    CHECK(similarity(a, b) == similarity(b, a));
  }
  CHECK_THROWS_AS(similarity(Descriptor(3), Descriptor(4)), DimensionMismatch);
}

TEST_CASE("top_k examples") {
  Rng rng(8);
  std::vector<Descriptor> ds;
  for (int i = 0; i < 12; ++i) ds.push_back(random_descriptor(rng));
  const TopoMetricMap m = map_of(ds);

  const auto r = top_k(ds[7], m, 3);
  REQUIRE(r.ranked.size() == 3);
  CHECK(r.ranked[0].first == 7);
  CHECK(r.ranked[0].second == doctest::Approx(1.0).epsilon(1e-6));

  const auto all = top_k(ds[2], m, 50);
  REQUIRE(all.ranked.size() == 12);
  std::vector<int> ids;
  for (std::size_t i = 0; i < all.ranked.size(); ++i) {
    ids.push_back(all.ranked[i].first);
    if (i) CHECK(all.ranked[i - 1].second >= all.ranked[i].second);
  }
  std::sort(ids.begin(), ids.end());
  for (int i = 0; i < 12; ++i) CHECK(ids[i] == i);

  CHECK_THROWS_AS(top_k(ds[0], TopoMetricMap{}, 1), EmptyMap);
}

TEST_CASE("top_k breaks ties by node id") {
  Rng rng(9);
  const Descriptor d = random_descriptor(rng);
  const auto r = top_k(d, map_of({random_descriptor(rng), d, d, d}), 4);
  CHECK(r.ranked[0].first == 1);
  CHECK(r.ranked[1].first == 2);
  CHECK(r.ranked[2].first == 3);
}

TEST_CASE("descriptor ingestion") {
  Rng rng(13);
  std::vector<Descriptor> ds;
  for (int i = 0; i < 5; ++i) ds.push_back(random_descriptor(rng));
  const auto dir = testing::temp_dir("ingest");

  SUBCASE("file written by save_map is an identity") {
    TopoMetricMap m = map_of(ds);
    save_map(m, dir / "map");
    const TopoMetricMap before = m;
    const IngestReport rep = ingest_descriptors(dir / "map" / "descriptors.f32", m);
    CHECK(rep.renormalized == 0);
    CHECK(m == before);
  }
  SUBCASE("norm 1.05 is renormalized with a warning") {
    std::vector<float> flat;
    for (const auto& d : ds)
      for (float x : d) flat.push_back(1.05f * x);
    write_f32(dir / "scaled.f32", flat);
    TopoMetricMap m = map_of(ds);
    const IngestReport rep = ingest_descriptors(dir / "scaled.f32", m);
    CHECK(rep.renormalized == 5);
    CHECK(rep.warnings.size() == 5);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(similarity(m.nodes[i].descriptor, ds[i]) == doctest::Approx(1.0));
  }
  SUBCASE("norm 1.5 is fatal") {
    std::vector<float> flat;
    for (const auto& d : ds)
      for (float x : d) flat.push_back(1.5f * x);
    write_f32(dir / "bad.f32", flat);
    TopoMetricMap m = map_of(ds);
    CHECK_THROWS_AS(ingest_descriptors(dir / "bad.f32", m), NonUnitNorm);
  }
  SUBCASE("wrong dimension") {
    write_f32(dir / "short.f32", std::vector<float>(5 * 128, 0.0f));
    TopoMetricMap m = map_of(ds);
    CHECK_THROWS_AS(ingest_descriptors(dir / "short.f32", m), DimensionMismatch);
  }
}

// Regression rate on the seeded rooms world; queries are rendered up to
// 0.5 m and 5 degrees from a keyframe and must retrieve that keyframe.
TEST_CASE("simulated queries retrieve their keyframe") {
  const auto t = testing::teach(sim::Preset::Rooms, 1, 30);
  const TopoMetricMap& map = t->map();
  Rng rng(9);
  int hits = 0, total = 0;
  while (total < 200) {
    const int id = static_cast<int>(rng.index(map.nodes.size()));
    const Pose& np = map.nodes[id].pose;
    const double r = 0.5 * std::sqrt(rng.uniform()), th = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec2 p = np.translation().head<2>() + r * Vec2(std::cos(th), std::sin(th));
    const double yaw = np.yaw() + rng.uniform(-0.087, 0.087);
    if (t->world.disc_collides(p, 0.2)) continue;
    const GrayImage q = t->world.render(t->world.camera_pose(p.x(), p.y(), yaw), t->K).observation.color;
    hits += top_k(extract_descriptor(q), map, 1).ranked.front().first == id;
    ++total;
  }
  MESSAGE("top-1 rate " << hits / 200.0);
  CHECK(hits >= 170);
}
