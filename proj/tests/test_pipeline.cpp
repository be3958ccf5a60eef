#include "doctest.h"
#include "sim_fixtures.hpp"
#include "test_helpers.hpp"
#include "vloc/errors.hpp"
#include "vloc/pipeline.hpp"

#include <fstream>

using namespace vloc;
using testing::rotation_error;
using testing::translation_error;

namespace {

const testing::Taught& corridor() {
  static const auto t = testing::teach(sim::Preset::Corridor, 2, 30);
  return *t;
}

Observation render_at(const testing::Taught& t, const Pose& p) { return t.world.render(p, t.K).observation; }

Observation featureless() {
  Observation o;
  o.color = GrayImage(128, 128, 100);
  o.depth = DepthImage(128, 128, 3.0);
  return o;
}

double distance_to_map(const TopoMetricMap& map, const Pose& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const MapNode& n : map.nodes) best = std::min(best, translation_error(n.pose, p));
  return best;
}

}  // namespace

TEST_CASE("self-localization on a keyframe") {
  const auto& t = corridor();
  const MapNode& node = t.map().nodes.at(3);
  Pipeline p(t.map(), t.matcher, t.K);
  CHECK(p.mode() == Mode::Lost);
  const auto fix = p.on_observation(render_at(t, node.pose), 1.0);
  CHECK(p.mode() == Mode::Tracking);
  REQUIRE(fix);
  CHECK(translation_error(*fix, node.pose) < 1e-6);
  CHECK(rotation_error(*fix, node.pose) < 1e-6);
  CHECK(p.log().back().reference_node == 3);
  CHECK(p.log().back().status == "Success");

  const Pose after = p.on_odometry(Pose(), 1.1);
  CHECK(translation_error(after, *p.prior_pose()) == 0.0);
  CHECK(translation_error(after, node.pose) < 1e-6);
}

TEST_CASE("odometry before localization") {
  const auto& t = corridor();
  Pipeline p(t.map(), t.matcher, t.K);
  CHECK_THROWS_AS(p.on_odometry(Pose(), 0.1), NotLocalized);
  CHECK_THROWS_AS(Pipeline(TopoMetricMap{}, t.matcher, t.K), EmptyMap);
}

TEST_CASE("five failed frames lose track") {
  const auto& t = corridor();
  Pipeline p(t.map(), t.matcher, t.K);
  REQUIRE(p.on_observation(render_at(t, t.map().nodes[5].pose), 1.0));
  for (int k = 1; k <= 5; ++k) {
    CHECK(p.mode() == Mode::Tracking);
    CHECK_FALSE(p.on_observation(featureless(), 1.0 + k));
    CHECK(p.log().back().status == "TooFewMatches");
  }
  CHECK(p.mode() == Mode::Lost);
  CHECK_FALSE(p.prior_pose());
  CHECK_THROWS_AS(p.on_odometry(Pose(), 7.0), NotLocalized);
  CHECK_THROWS_AS(p.on_observation(featureless(), 6.5), NonMonotonicTimestamp);

  // Back on the map the pipeline relocalizes through retrieval.
  const auto fix = p.on_observation(render_at(t, t.map().nodes[7].pose), 8.0);
  CHECK(p.mode() == Mode::Tracking);
  REQUIRE(fix);
  CHECK(translation_error(*fix, t.map().nodes[7].pose) < 1e-6);
}

TEST_CASE("oracle fixes are exact along the mapping run") {
  const auto& t = corridor();
  Pipeline p(t.map(), t.matcher, t.K);
  double worst = 0.0;
  int fixes = 0;
  for (std::size_t i = 0; i < t.run.segment.size(); i += 3) {
    const auto& f = t.run.segment.frames[i];
    if (const auto fix = p.on_observation(f.observation, f.timestamp)) {
      worst = std::max(worst, translation_error(*fix, f.pose));
      ++fixes;
    }
  }
  CHECK(fixes > 0);
  CHECK(worst < 1e-6);
}

// Noisy repeat of the mapping route (2% drift, seed 11). Regression rates
// measured when frozen: oracle 58/63, classical 21/63. The oracle misses are
// the turnarounds at the corridor ends, where no node facing the current way
// shares landmarks. The classical patches are not scale invariant and
// rarely survive 0.5 m of forward motion down the corridor.
TEST_CASE("replayed run localizes near keyframes") {
  const auto& t = corridor();
  sim::SegmentRates rates;
  const auto run = sim::generate_segment(t.world, t.route, t.K, rates, sim::OdometryNoise::drift(0.02), 11);
  const ClassicalMatcher classical;
  for (const Matcher* m : {static_cast<const Matcher*>(&t.matcher), static_cast<const Matcher*>(&classical)}) {
    Pipeline p(t.map(), *m, t.K);
    testing::replay(p, run);
    int near = 0, ok = 0;
    for (std::size_t i = 0; i < run.segment.size(); ++i) {
      if (distance_to_map(t.map(), run.segment.frames[i].pose) > 1.0) continue;
      ++near;
      ok += p.log()[i].status == "Success";
    }
    const double rate = double(ok) / near;
    const bool is_classical = m == &classical;
    MESSAGE((is_classical ? "classical " : "oracle ") << ok << "/" << near << " = " << rate);
    CHECK(near == 63);
    CHECK(rate >= (is_classical ? 0.33 : 0.92));
  }
}

TEST_CASE("fused stream beats dead reckoning") {
  const auto& t = corridor();
  sim::SegmentRates rates;
  for (std::uint64_t seed = 21; seed < 26; ++seed) {
    const auto run = sim::generate_segment(t.world, t.route, t.K, rates, sim::OdometryNoise::drift(0.02), seed);
    Pipeline p(t.map(), t.matcher, t.K);
    const auto r = testing::replay(p, run);
    const double fused = compute_ate(run.ground_truth, r.fused, 0.01).rmse;
    const double odo = compute_ate(run.ground_truth, r.odometry, 0.01).rmse;
    MESSAGE("seed " << seed << ": fused " << fused << " odometry " << odo << " fixes " << r.fixes);
    CHECK(fused < odo);

    // Causality: every emitted pose carries a timestamp no later than the
    // input that produced it, in order.
    for (std::size_t i = 1; i < r.fused.size(); ++i) CHECK(r.fused[i - 1].timestamp < r.fused[i].timestamp);
  }
}

TEST_CASE("frame log csv") {
  const auto& t = corridor();
  Pipeline p(t.map(), t.matcher, t.K);
  p.on_observation(render_at(t, t.map().nodes[2].pose), 0.5);
  p.on_observation(featureless(), 1.5);
  const auto dir = testing::temp_dir("framelog");
  write_frame_log(dir / "log.csv", p.log());
  std::ifstream in(dir / "log.csv");
  std::string header, a, b, extra;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  CHECK(header == "timestamp,mode,reference_node,inliers,total,status,sim_top1");
  CHECK(a.rfind("0.5,Tracking,2,", 0) == 0);
  CHECK(b.find(",TooFewMatches,") != std::string::npos);
  CHECK_FALSE(std::getline(in, extra));
}
