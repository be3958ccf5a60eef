#include "doctest.h"
#include "test_helpers.hpp"
#include "vloc/errors.hpp"
#include "vloc/simworld.hpp"

#include <fstream>
#include <limits>

using namespace vloc;
using namespace vloc::sim;

namespace {

const CameraIntrinsics kK{100.0, 100.0, 64.0, 64.0, 128, 128};

/// 10 x 5 box with a free interior x in [1, 9), y in [1, 4).
GridWorld box_world() {
  GridWorld g(10, 5, 1.0, 2.5, 17);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 10; ++x) g.set_occupied(x, y, x == 0 || y == 0 || x == 9 || y == 4);
  return g;
}

/// Independent slow oracle: slab intersection against every occupied box
/// plus the floor plane.
double brute_force_depth(const GridWorld& g, const Vec3& o, const Vec3& d) {
  double best = std::numeric_limits<double>::infinity();
  if (d.z() < 0) best = -o.z() / d.z();
  for (int iy = 0; iy < g.height; ++iy) {
    for (int ix = 0; ix < g.width; ++ix) {
      if (!g.occupied(ix, iy)) continue;
      const Vec3 lo(ix * g.cell_size, iy * g.cell_size, 0.0);
      const Vec3 hi((ix + 1) * g.cell_size, (iy + 1) * g.cell_size, g.wall_height);
      double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        if (d[a] == 0.0) {
          if (o[a] < lo[a] || o[a] > hi[a]) miss = true;
          continue;
        }
        double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) miss = true;
      }
      if (!miss) best = std::min(best, t0);
    }
  }
  return std::isfinite(best) ? best : 0.0;
}

}  // namespace

TEST_CASE("axis-aligned wall depth") {
  SimWorld world(box_world());
  const SimFrame f = world.render(world.camera_pose(7.0, 2.5, 0.0), kK);
  CHECK(std::abs(f.observation.depth.at(64, 64) - 2.0) < 1e-9);
}

TEST_CASE("texture is view independent") {
  SimWorld world(box_world());
  const SimFrame a = world.render(world.camera_pose(7.0, 2.5, 0.0), kK);
  const SimFrame b = world.render(world.camera_pose(5.5, 2.5, 0.0), kK);
  CHECK(a.observation.color.at(64, 64) == b.observation.color.at(64, 64));
  CHECK(a.surface.at(64, 64) == b.surface.at(64, 64));
}

TEST_CASE("render rejects poses inside walls") {
  SimWorld world(box_world());
  CHECK_THROWS_AS(world.render(world.camera_pose(0.5, 2.5, 0.0), kK), PoseInCollision);
}

TEST_CASE("depth matches brute-force ray oracle on a 32x32 probe grid") {
  const auto gen = generate_world(Preset::Rooms, 3);
  SimWorld world(gen.world);
  const Pose pose = world.camera_pose(gen.route[1].x(), gen.route[1].y(), 0.7);
  const SimFrame f = world.render(pose, kK);
  const Pose w_o = to_optical(pose);
  double worst = 0.0;
  for (int j = 0; j < 32; ++j) {
    for (int i = 0; i < 32; ++i) {
      const int u = i * 4 + 1, v = j * 4 + 2;
      const Vec3 dir = w_o.rotation() * Vec3((u - kK.cx) / kK.fx, (v - kK.cy) / kK.fy, 1.0);
      const double oracle = brute_force_depth(world.grid(), pose.translation(), dir);
      worst = std::max(worst, std::abs(oracle - f.observation.depth.at(u, v)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("landmark observations reproject exactly") {
  const auto gen = generate_world(Preset::Corridor, 1);
  SimWorld world(gen.world);
  std::size_t checked = 0;
  for (double x : {3.0, 8.0, 15.5, 22.0}) {
    const Pose pose = world.camera_pose(x, 4.5, 0.1);
    const SimFrame f = world.render(pose, kK);
    const Pose o_w = to_optical(pose).inverse();
    for (const auto& lo : f.observation.landmarks) {
      const Landmark* lm = nullptr;
      for (const auto& l : world.landmarks())
        if (l.id == lo.id) lm = &l;
      REQUIRE(lm != nullptr);
      const Vec3 pc = o_w * lm->position;
      const auto uv = project(kK, pc);
      REQUIRE(uv);
      CHECK((*uv - lo.pixel).norm() < 1e-6);
      CHECK(std::abs(lo.depth - pc.z()) < 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("typical views see tens to hundreds of landmarks") {
  for (Preset p : {Preset::Corridor, Preset::Rooms, Preset::Campus}) {
    const auto gen = generate_world(p, 5);
    SimWorld world(gen.world);
    std::size_t total = 0;
    for (std::size_t i = 0; i + 1 < gen.route.size(); ++i) {
      const Vec2 d = gen.route[i + 1] - gen.route[i];
      const auto f = world.render(world.camera_pose(gen.route[i].x(), gen.route[i].y(),
                                                    std::atan2(d.y(), d.x())), kK);
      total += f.observation.landmarks.size();
    }
    const double mean = double(total) / double(gen.route.size() - 1);
    INFO(preset_name(p), " mean landmarks ", mean);
    CHECK(mean > 30);
    CHECK(mean < 400);
  }
}

TEST_CASE("rendering is deterministic") {
  const auto gen = generate_world(Preset::Campus, 9);
  SimWorld world(gen.world);
  const Pose pose = world.camera_pose(gen.route[0].x(), gen.route[0].y(), 0.3);
  const SimFrame a = world.render(pose, kK);
  const SimFrame b = SimWorld(gen.world).render(pose, kK);
  CHECK(a.observation.color == b.observation.color);
  CHECK(a.observation.depth == b.observation.depth);
  CHECK(a.observation.landmarks.size() == b.observation.landmarks.size());
}

TEST_CASE("world presets are closed and the route is free") {
  for (Preset p : {Preset::Corridor, Preset::Rooms, Preset::Campus}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto gen = generate_world(p, seed);
      CHECK_NOTHROW(gen.world.validate());
      SimWorld world(gen.world);
      for (std::size_t i = 0; i + 1 < gen.route.size(); ++i) {
        CHECK(world.line_of_sight(gen.route[i], gen.route[i + 1], 0.2));
      }
    }
  }
}

TEST_CASE("world file round trip") {
  const auto dir = testing::temp_dir("world");
  const auto gen = generate_world(Preset::Rooms, 4);
  write_world(dir / "world.txt", gen.world);
  CHECK(read_world(dir / "world.txt") == gen.world);
  write_waypoints(dir / "wp.csv", gen.route);
  const auto wp = read_waypoints(dir / "wp.csv");
  REQUIRE(wp.size() == gen.route.size());
  for (std::size_t i = 0; i < wp.size(); ++i) CHECK(wp[i] == gen.route[i]);

  std::ofstream(dir / "bad.txt") << "3 3 1 2.5 0\n###\n#.\n###\n";
  CHECK_THROWS_AS(read_world(dir / "bad.txt"), FormatError);
}

TEST_CASE("robot step") {
  SimWorld world(box_world());
  SimRobot still(world.camera_pose(3.0, 2.5, 0.0), OdometryNoise::drift(0.02), 1);
  const StepResult r0 = still.step(world, 0.0, 0.0, 1.0);
  CHECK(r0.gt_pose == world.camera_pose(3.0, 2.5, 0.0));
  CHECK(testing::translation_error(r0.odom_delta, Pose::identity()) < 1e-12);

  SimRobot robot(world.camera_pose(3.0, 2.5, 0.0), OdometryNoise{}, 1);
  const StepResult r1 = robot.step(world, 1.0, 0.0, 1.0);
  CHECK(r1.gt_pose.translation().isApprox(Vec3(4.0, 2.5, 0.5)));
  CHECK(r1.odom_delta.translation().isApprox(Vec3(1.0, 0.0, 0.0)));

  // Commands are clipped to the velocity limits.
  const StepResult r2 = robot.step(world, 5.0, 0.0, 1.0);
  CHECK(r2.gt_pose.translation().x() == doctest::Approx(5.0));

  // Driving into the wall is blocked.
  SimRobot blocked(world.camera_pose(8.5, 2.5, 0.0), OdometryNoise{}, 1);
  const StepResult r3 = blocked.step(world, 1.0, 0.0, 1.0);
  CHECK(r3.blocked);
  CHECK(r3.gt_pose == world.camera_pose(8.5, 2.5, 0.0));
}

TEST_CASE("zero-noise odometry folds to ground truth") {
  const auto gen = generate_world(Preset::Rooms, 2);
  SimWorld world(gen.world);
  const auto seg = generate_segment(world, gen.route, kK, SegmentRates{}, OdometryNoise{}, 1);
  Pose acc = seg.ground_truth.front().pose;
  for (const auto& o : seg.odometry) acc = acc * o.delta;
  CHECK(testing::translation_error(acc, seg.ground_truth.back().pose) < 1e-9);
  CHECK(testing::rotation_error(acc, seg.ground_truth.back().pose) < 1e-9);
}

TEST_CASE("noisy odometry drifts by a bounded amount over 100 m") {
  const auto gen = generate_world(Preset::Campus, 1);
  SimWorld world(gen.world);
  SegmentRates rates;
  rates.camera_hz = 0.0;
  rates.frame_spacing = 1000.0;
  // The first five places form the outer ring, roughly 94 m.
  std::vector<Vec2> ring = gen.route;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto seg = generate_segment(world, ring, kK, rates, OdometryNoise::drift(0.02), seed);
    Trajectory odom{{0.0, seg.ground_truth.front().pose}};
    for (const auto& o : seg.odometry) odom.push_back({o.timestamp, odom.back().pose * o.delta});
    Trajectory gt(seg.ground_truth.begin(), seg.ground_truth.end());
    // Restrict to the first 100 m of travel.
    double len = 0.0;
    std::size_t cut = 1;
    for (; cut < gt.size() && len < 100.0; ++cut)
      len += testing::translation_error(gt[cut].pose, gt[cut - 1].pose);
    gt.resize(cut);
    odom.resize(cut);
    const double ate = compute_ate(gt, odom, 1e-6).rmse;
    INFO("seed ", seed, " ate ", ate, " length ", len);
    CHECK(len >= 99.0);
    CHECK(ate >= 0.5);
    CHECK(ate <= 5.0);
  }
}

TEST_CASE("segment generation") {
  SimWorld world(box_world());
  const auto single = generate_segment(world, {{3.0, 2.5}}, kK, SegmentRates{}, OdometryNoise{}, 1);
  CHECK(single.segment.size() == 1);

  GridWorld long_box(14, 5, 1.0, 2.5, 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 14; ++x) long_box.set_occupied(x, y, x == 0 || y == 0 || x == 13 || y == 4);
  SimWorld corridor(long_box);
  SegmentRates rates;
  rates.frame_spacing = 1.0;
  const auto straight = generate_segment(corridor, {{1.5, 2.5}, {11.5, 2.5}}, kK, rates,
                                         OdometryNoise{}, 1);
  REQUIRE(straight.segment.size() == 11);
  for (std::size_t i = 1; i < straight.segment.size(); ++i) {
    CHECK(straight.segment.frames[i].pose.translation().x() >
          straight.segment.frames[i - 1].pose.translation().x());
  }
  CHECK_NOTHROW(straight.segment.validate());
}

TEST_CASE("segment replay reproduces frames byte for byte") {
  const auto gen = generate_world(Preset::Rooms, 6);
  SimWorld world(gen.world);
  const std::vector<Vec2> lshape(gen.route.begin(), gen.route.begin() + 4);
  const auto seg = generate_segment(world, lshape, kK, SegmentRates{}, OdometryNoise{}, 3);
  REQUIRE(seg.segment.size() > 3);
  for (const auto& fr : seg.segment.frames) {
    const SimFrame again = world.render(fr.pose, kK);
    CHECK(again.observation.color == fr.observation.color);
    CHECK(again.observation.depth == fr.observation.depth);
  }
}

TEST_CASE("unreachable waypoint") {
  SimWorld world(box_world());
  SegmentRates rates;
  rates.waypoint_timeout = 5.0;
  // (8.9, 1.1) is free but the robot disc cannot get there.
  CHECK_THROWS_AS(generate_segment(world, {{3.0, 2.5}, {8.95, 1.05}}, kK, rates, OdometryNoise{}, 1),
                  UnreachableWaypoint);
}
