#include "doctest.h"
#include "test_helpers.hpp"
#include "vloc/errors.hpp"
#include "vloc/geometry.hpp"

using namespace vloc;
using vloc::testing::random_pose;

namespace {

const CameraIntrinsics kK{100.0, 100.0, 64.0, 64.0, 128, 128};

bool near_pose(const Pose& a, const Pose& b, double tol) {
  return testing::translation_error(a, b) < tol && testing::rotation_error(a, b) < tol;
}

}  // namespace

TEST_CASE("pose canonical form") {
  const Pose p(Vec3(1, 2, 3), Quat(-0.5, 0.5, -0.5, 0.5));
  CHECK(p.rotation().w() >= 0.0);
  CHECK(std::abs(p.rotation().norm() - 1.0) < 1e-12);

  const Pose unnormalized(Vec3::Zero(), Quat(2.0, 0.0, 0.0, 0.0));
  CHECK(unnormalized.rotation().w() == doctest::Approx(1.0));
}

TEST_CASE("compose examples") {
  Rng rng(7);
  const Pose P = random_pose(rng);
  CHECK(near_pose(compose(Pose::identity(), P), P, 1e-15));
  CHECK(near_pose(compose(P, P.inverse()), Pose::identity(), 1e-12));
  const Pose sum = compose(Pose::translation_only({0, 0, 1}), Pose::translation_only({0, 0, 2}));
  CHECK(sum.translation().isApprox(Vec3(0, 0, 3)));
}

TEST_CASE("compose is associative") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(near_pose((a * b) * c, a * (b * c), 1e-12));
  }
}

TEST_CASE("between examples and round-trip property") {
  Rng rng(3);
  const Pose P = random_pose(rng);
  CHECK(near_pose(between(P, P), Pose::identity(), 1e-12));
  CHECK(near_pose(between(Pose::identity(), P), P, 1e-12));
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose back = compose(a, between(a, b));
    worst = std::max({worst, testing::translation_error(back, b), testing::rotation_error(back, b)});
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("quaternion norm stays unit across a million compositions") {
  Rng rng(5);
  const Pose step = random_pose(rng, 0.1);
  Pose acc;
  double worst = 0.0;
  for (int i = 0; i < 1'000'000; ++i) {
    acc = acc * step;
    if (i % 1000 == 0) worst = std::max(worst, std::abs(acc.rotation().norm() - 1.0));
  }
  worst = std::max(worst, std::abs(acc.rotation().norm() - 1.0));
  CHECK(worst < 1e-9);
}

TEST_CASE("project examples") {
  auto uv = project(kK, {0, 0, 2});
  REQUIRE(uv);
  CHECK(uv->x() == 64.0);
  CHECK(uv->y() == 64.0);
  uv = project(kK, {1, 0, 2});
  REQUIRE(uv);
  CHECK(uv->x() == 114.0);
  CHECK(uv->y() == 64.0);
  CHECK_FALSE(project(kK, {0, 0, -1}));
  CHECK_FALSE(project(kK, {0, 0, 0}));
  CHECK_FALSE(project(kK, {10, 0, 1}));  // u = 1064 off the image
}

TEST_CASE("unproject examples") {
  CHECK(unproject(kK, {64, 64}, 2.0).isApprox(Vec3(0, 0, 2)));
  CHECK(unproject(kK, {114, 64}, 2.0).isApprox(Vec3(1, 0, 2)));
  CHECK_THROWS_AS(unproject(kK, {64, 64}, 0.0), InvalidDepth);
  CHECK_THROWS_AS(unproject(kK, {64, 64}, 25.0), InvalidDepth);
  CHECK_NOTHROW(unproject(kK, {64, 64}, 25.0, DepthRange{0.05, 30.0}));
}

TEST_CASE("project inverts unproject on a 16x16 grid at 3 depths") {
  double worst = 0.0;
  for (int j = 0; j < 16; ++j) {
    for (int i = 0; i < 16; ++i) {
      const Vec2 uv(i * 8.0 + 0.5, j * 8.0 + 0.25);
      for (double d : {0.3, 2.0, 15.0}) {
        const auto back = project(kK, unproject(kK, uv, d));
        REQUIRE(back);
        worst = std::max(worst, (*back - uv).norm());
      }
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("intrinsics validation") {
  CHECK_NOTHROW(kK.validate());
  CameraIntrinsics bad = kK;
  bad.fx = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidIntrinsics);
  bad = kK;
  bad.cx = 200;
  CHECK_THROWS_AS(bad.validate(), InvalidIntrinsics);
}

TEST_CASE("exp and log") {
  CHECK(exp_map(Tangent::Zero()) == Pose::identity());
  CHECK(log_map(Pose::identity()).norm() == 0.0);

  Rng rng(99);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Tangent d;
    d.head<3>() = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    d.tail<3>() = testing::random_unit(rng) * rng.uniform(0.0, 3.0);
    worst = std::max(worst, (log_map(exp_map(d)) - d).norm());
    const Pose P = exp_map(d);
    const Pose back = exp_map(log_map(P));
    worst = std::max({worst, testing::translation_error(P, back), testing::rotation_error(P, back)});
  }
  CHECK(worst < 1e-9);

  Tangent near_pi = Tangent::Zero();
  near_pi(3) = std::numbers::pi - 1e-7;
  CHECK_THROWS_AS(log_map(exp_map(near_pi)), NearSingularRotation);
}

TEST_CASE("right perturbation convention") {
  Rng rng(4);
  const Pose x = random_pose(rng);
  Tangent d;
  d << 0.1, -0.2, 0.3, 0.0, 0.0, 0.0;
  const Pose moved = x * exp_map(d);
  CHECK((moved.translation() - (x.translation() + x.rotation() * d.head<3>())).norm() < 1e-12);
}

TEST_CASE("rotation angle is symmetric and sign-invariant") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    CHECK(rotation_angle(a.rotation(), b.rotation()) == rotation_angle(b.rotation(), a.rotation()));
    Quat neg = a.rotation();
    neg.coeffs() = -neg.coeffs();
    CHECK(rotation_angle(a.rotation(), neg) == 0.0);
  }
  const Quat q90(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()));
  CHECK(rotation_angle(Quat::Identity(), q90) == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("optical frame convention") {
  // Body x (forward) is optical z.
  const Vec3 fwd = body_from_optical() * Vec3(0, 0, 1);
  CHECK(fwd.isApprox(Vec3(1, 0, 0)));
  const Vec3 right = body_from_optical() * Vec3(1, 0, 0);
  CHECK(right.isApprox(Vec3(0, -1, 0)));
}

TEST_CASE("pose text serialization") {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    CHECK(parse_pose(format_pose(p)) == p);
  }
  CHECK(format_pose(Pose::identity()) == "0 0 0 1 0 0 0");
  CHECK_THROWS_AS(parse_pose("1 2 3"), FormatError);
  CHECK_THROWS_AS(parse_pose("1 2 3 1 0 0 0 9"), FormatError);
}
