// vloc: command line front end over the library. Every output is CSV or TUM
// text. Exit codes: 0 ok, 2 planned failure (a goal not reached), 1 error.

#include "vloc/dataset.hpp"
#include "vloc/errors.hpp"
#include "vloc/mapgraph.hpp"
#include "vloc/matching.hpp"
#include "vloc/navigation.hpp"
#include "vloc/pipeline.hpp"
#include "vloc/relocal.hpp"
#include "vloc/simworld.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using namespace vloc;

namespace {

constexpr int kPlannedFailure = 2;

std::unique_ptr<Matcher> make_matcher(const std::string& name, const sim::SimWorld* world,
                                      const CameraIntrinsics& K, const OracleParams& op) {
  if (name == "classical") return std::make_unique<ClassicalMatcher>();
  if (name == "oracle") return std::make_unique<OracleMatcher>(world, K, op);
  throw std::invalid_argument("unknown matcher '" + name + "'");
}

CameraIntrinsics map_intrinsics(const TopoMetricMap& map) {
  return map.intrinsics ? *map.intrinsics : CameraIntrinsics{};
}

Pose parse_start(const std::string& text, const sim::SimWorld& world) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  double x, y, yaw_deg;
  if (!(in >> x >> y >> yaw_deg)) throw std::invalid_argument("--start expects x,y,yaw_deg");
  return world.camera_pose(x, y, yaw_deg * std::numbers::pi / 180.0);
}

void print_components(const BuildResult& r) {
  if (r.connected()) return;
  std::cerr << "warning: CnG is disconnected into " << r.components.size() << " components:";
  for (const auto& c : r.components) std::cerr << " [" << c.front() << ".." << c.back() << ", " << c.size() << " nodes]";
  std::cerr << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"map-lite visual localization and image-goal navigation"};
  app.require_subcommand(1);

  // gen-world
  std::string out, preset = "corridor", route_out;
  std::uint64_t seed = 0;
  auto* gen_world = app.add_subcommand("gen-world", "generate a grid world");
  gen_world->add_option("--out", out, "world file")->required();
  gen_world->add_option("--preset", preset, "corridor|rooms|campus")->check(CLI::IsMember({"corridor", "rooms", "campus"}));
  gen_world->add_option("--seed", seed);
  gen_world->add_option("--route", route_out, "also write the mapping route as waypoints CSV");

  // gen-segment
  std::string world_path, waypoints_path;
  sim::SegmentRates rates;
  double drift = 0.0;
  auto* gen_segment = app.add_subcommand("gen-segment", "drive a route and record a segment");
  gen_segment->add_option("--world", world_path)->required();
  gen_segment->add_option("--waypoints", waypoints_path)->required();
  gen_segment->add_option("--out", out, "segment directory")->required();
  gen_segment->add_option("--seed", seed);
  gen_segment->add_option("--odom-hz", rates.odom_hz);
  gen_segment->add_option("--camera-hz", rates.camera_hz);
  gen_segment->add_option("--frame-spacing", rates.frame_spacing, "capture every N meters instead of at camera-hz");
  gen_segment->add_option("--max-speed", rates.max_speed);
  gen_segment->add_option("--drift", drift, "odometry drift as a fraction of distance (0.02 = 2%)");

  // build-map
  std::string input, matcher_name = "classical";
  std::size_t budget = 0;
  bool grow = false;
  BuildOptions bo;
  auto* build = app.add_subcommand("build-map", "select keyframes and build a topo-metric map");
  build->add_option("--input", input, "segment directory")->required();
  build->add_option("--keyframe-budget", budget)->required()->check(CLI::PositiveNumber);
  build->add_option("--grid-res", bo.grid_res);
  build->add_option("--out", out, "map directory")->required();
  build->add_flag("--cng-from-cvg", bo.cng_from_cvg);
  build->add_option("--covis-threshold", bo.covis_threshold);
  build->add_option("--nav-radius", bo.nav_radius);
  build->add_option("--matcher", matcher_name, "classical|oracle");
  build->add_option("--world", world_path, "world file: enables oracle matching and line-of-sight CnG checks");
  build->add_flag("--grow-until-connected", grow, "raise the budget by 10% until the CnG is connected");

  // localize
  std::string map_path, seq_path, log_path;
  auto* localize = app.add_subcommand("localize", "replay a segment through the localization pipeline");
  localize->add_option("--map", map_path)->required();
  localize->add_option("--seq", seq_path)->required();
  localize->add_option("--out", out, "TUM trajectory")->required();
  localize->add_option("--log", log_path, "per-frame CSV");
  localize->add_option("--matcher", matcher_name);
  localize->add_option("--world", world_path);

  // gen-goals
  std::size_t goal_count = 5;
  int start_node = 0;
  auto* gen_goals = app.add_subcommand("gen-goals", "render goal images at spread-out map nodes");
  gen_goals->add_option("--world", world_path)->required();
  gen_goals->add_option("--map", map_path)->required();
  gen_goals->add_option("--count", goal_count);
  gen_goals->add_option("--start-node", start_node);
  gen_goals->add_option("--out", out, "directory for goal_<k>.pgm")->required();

  // navigate
  std::vector<std::string> goal_images;
  std::string report_path, traj_path, gt_path, start_text;
  NavConfig nav;
  auto* navigate = app.add_subcommand("navigate", "closed-loop image-goal navigation in the simulator");
  navigate->add_option("--world", world_path)->required();
  navigate->add_option("--map", map_path)->required();
  navigate->add_option("--goal-image", goal_images, "repeatable; goals are visited in order")->required();
  navigate->add_option("--seed", seed);
  navigate->add_option("--report", report_path)->required();
  navigate->add_option("--trajectory", traj_path, "estimated TUM trajectory");
  navigate->add_option("--gt-trajectory", gt_path, "ground-truth TUM trajectory");
  navigate->add_option("--log", log_path, "per-frame localization CSV");
  std::string nav_matcher = "oracle";
  navigate->add_option("--matcher", nav_matcher, "oracle|classical");
  navigate->add_option("--start", start_text, "x,y,yaw_deg (default: pose of node 0)");
  double nav_drift = 0.02;
  navigate->add_option("--drift", nav_drift, "odometry drift fraction");
  navigate->add_option("--timeout", nav.goal_timeout, "model seconds per goal");
  navigate->add_option("--switch-radius", nav.params.switch_radius);
  navigate->add_option("--goal-radius", nav.params.goal_radius);
  navigate->add_option("--robot-radius", nav.params.robot_radius);

  // gen-reloc
  RelocGenOptions rg;
  double max_yaw_deg = 15.0;
  auto* gen_reloc = app.add_subcommand("gen-reloc", "render a relocalization benchmark");
  gen_reloc->add_option("--world", world_path)->required();
  gen_reloc->add_option("--waypoints", waypoints_path)->required();
  gen_reloc->add_option("--out", out)->required();
  gen_reloc->add_option("--seed", rg.seed);
  gen_reloc->add_option("--spacing", rg.spacing);
  gen_reloc->add_option("--max-offset", rg.max_offset);
  gen_reloc->add_option("--max-yaw-deg", max_yaw_deg);

  // bench-reloc
  std::string dataset_path, per_query_path;
  double min_conf = 0.0;
  OracleParams op;
  PnpParams pnp;
  auto* bench = app.add_subcommand("bench-reloc", "map-free relocalization benchmark");
  bench->add_option("--dataset", dataset_path)->required();
  bench->add_option("--matcher", matcher_name, "classical|oracle|ingest")->required()
      ->check(CLI::IsMember({"classical", "oracle", "ingest"}));
  bench->add_option("--out", out, "metrics CSV")->required();
  bench->add_option("--per-query", per_query_path, "per-query CSV");
  bench->add_option("--min-conf", min_conf, "ingest: drop matches below this confidence");
  bench->add_option("--outlier-rate", op.outlier_rate);
  bench->add_option("--noise-px", op.noise_px);
  bench->add_option("--seed", op.seed);
  bench->add_option("--reproj-thresh", pnp.reproj_thresh);
  bench->add_option("--min-inliers", pnp.min_inliers);

  // eval-ate
  std::string est_path;
  double max_dt = 0.05;
  auto* eval_ate = app.add_subcommand("eval-ate", "absolute trajectory error, no alignment");
  eval_ate->add_option("--gt", gt_path)->required();
  eval_ate->add_option("--est", est_path)->required();
  eval_ate->add_option("--max-dt", max_dt);
  eval_ate->add_option("--out", out, "per-pose errors CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_world) {
      const sim::GeneratedWorld g = sim::generate_world(sim::parse_preset(preset), seed);
      sim::write_world(out, g.world);
      if (!route_out.empty()) sim::write_waypoints(route_out, g.route);
      std::cout << "world " << g.world.width << "x" << g.world.height << " cells, route "
                << g.route.size() << " waypoints\n";
    } else if (*gen_segment) {
      const sim::SimWorld world(sim::read_world(world_path));
      const CameraIntrinsics K;
      const sim::GeneratedSegment g = sim::generate_segment(
          world, sim::read_waypoints(waypoints_path), K, rates, sim::OdometryNoise::drift(drift), seed);
      write_segment_dir(out, {K, g.segment, g.odometry, g.ground_truth});
      std::cout << g.segment.size() << " frames, " << g.odometry.size() << " odometry samples\n";
    } else if (*build) {
      const SegmentData seg = read_segment_dir(input);
      std::optional<sim::SimWorld> world;
      if (!world_path.empty()) {
        world.emplace(sim::read_world(world_path));
        bo.navigable = [&](const Vec2& a, const Vec2& b) {
          return world->line_of_sight(a, b, nav.params.robot_radius);
        };
      }
      if (matcher_name == "oracle" && !world) throw std::invalid_argument("--matcher oracle needs --world");
      const auto matcher = make_matcher(matcher_name, world ? &*world : nullptr, seg.K, {});
      BuildResult result;
      std::size_t used = budget;
      if (grow) {
        GrownBuild g = build_map_connected(seg.segment, seg.K, budget, *matcher, bo);
        result = std::move(g.result);
        used = g.budget;
      } else {
        result = build_map(seg.segment, select_keyframes(seg.segment, seg.K, budget, bo.grid_res),
                           seg.K, *matcher, bo);
      }
      print_components(result);
      const StorageReport s = save_map(result.map, out);
      std::cout << result.map.nodes.size() << " nodes (budget " << used << "), "
                << result.map.cng_edges.size() << " CnG edges, " << result.map.cvg_edges.size()
                << " CvG edges, " << s.total() << " bytes\n";
    } else if (*localize) {
      const TopoMetricMap map = load_map(map_path);
      const SegmentData seg = read_segment_dir(seq_path);
      std::optional<sim::SimWorld> world;
      if (!world_path.empty()) world.emplace(sim::read_world(world_path));
      if (matcher_name == "oracle" && !world) throw std::invalid_argument("--matcher oracle needs --world");
      const auto matcher = make_matcher(matcher_name, world ? &*world : nullptr, seg.K, {});
      Pipeline pipeline(map, *matcher, seg.K);
      // Odometry first at equal timestamps so a fix lands on the newest state.
      std::size_t oi = 0;
      for (const SegmentFrame& f : seg.segment.frames) {
        for (; oi < seg.odometry.size() && seg.odometry[oi].timestamp <= f.timestamp; ++oi) {
          try {
            pipeline.on_odometry(seg.odometry[oi].delta, seg.odometry[oi].timestamp);
          } catch (const NotLocalized&) {
          }
        }
        pipeline.on_observation(f.observation, f.timestamp);
      }
      for (; oi < seg.odometry.size(); ++oi) {
        try {
          pipeline.on_odometry(seg.odometry[oi].delta, seg.odometry[oi].timestamp);
        } catch (const NotLocalized&) {
        }
      }
      write_tum(out, pipeline.trajectory());
      if (!log_path.empty()) write_frame_log(log_path, pipeline.log());
      std::size_t fixes = 0;
      for (const FrameLog& l : pipeline.log()) fixes += l.status == "Success";
      std::cout << fixes << "/" << pipeline.log().size() << " frames localized\n";
    } else if (*gen_goals) {
      const sim::SimWorld world(sim::read_world(world_path));
      const TopoMetricMap map = load_map(map_path);
      const CameraIntrinsics K = map_intrinsics(map);
      const auto goals = spread_goal_nodes(map, map.nodes.at(start_node).pose.translation(), goal_count);
      fs::create_directories(out);
      for (std::size_t k = 0; k < goals.size(); ++k) {
        write_pgm(fs::path(out) / ("goal_" + std::to_string(k) + ".pgm"),
                  world.render(map.nodes[goals[k]].pose, K).observation.color);
        std::cout << "goal_" << k << " node " << goals[k] << '\n';
      }
    } else if (*navigate) {
      const sim::SimWorld world(sim::read_world(world_path));
      const TopoMetricMap map = load_map(map_path);
      const CameraIntrinsics K = map_intrinsics(map);
      std::vector<GrayImage> images;
      for (const auto& p : goal_images) images.push_back(read_pgm(p));
      const Pose start = start_text.empty() ? map.nodes.at(0).pose : parse_start(start_text, world);
      const auto matcher = make_matcher(nav_matcher, &world, K, {});
      nav.odometry = sim::OdometryNoise::drift(nav_drift);
      const NavReport report = run_mission(world, map, images, start, *matcher, K, nav, seed);
      write_nav_report(report_path, report);
      if (!traj_path.empty()) write_tum(traj_path, report.estimated);
      if (!gt_path.empty()) write_tum(gt_path, report.ground_truth);
      if (!log_path.empty()) write_frame_log(log_path, report.frames);
      for (const NavGoalReport& g : report.goals) {
        std::cout << "goal " << g.goal_index << " node " << g.goal_node << ": " << g.status << ", "
                  << format_double(g.time, 4) << " s, " << format_double(g.path_length, 4) << " m\n";
      }
      if (!report.all_success()) return kPlannedFailure;
    } else if (*gen_reloc) {
      const sim::SimWorld world(sim::read_world(world_path));
      rg.max_yaw = max_yaw_deg * std::numbers::pi / 180.0;
      const RelocDataset d = generate_reloc_dataset(world, sim::read_waypoints(waypoints_path), CameraIntrinsics{}, rg);
      write_reloc_dataset(out, d);
      std::cout << d.queries.size() << " queries\n";
    } else if (*bench) {
      const RelocDataset d = read_reloc_dataset(dataset_path);
      pnp.seed = op.seed;
      std::vector<std::pair<RelocResult, Pose>> results;
      std::ofstream per;
      if (!per_query_path.empty()) {
        per.open(per_query_path);
        per << "query,ref,status,inliers,total,e_t_m,e_r_deg,time_ms\n";
      }
      const ClassicalMatcher classical;
      const OracleMatcher oracle(nullptr, d.K, op);
      for (std::size_t j = 0; j < d.queries.size(); ++j) {
        const RelocQuery& q = d.queries[j];
        MapNode node;
        node.id = q.ref;
        node.pose = d.refs[q.ref].pose;
        node.image = d.refs[q.ref].image;
        node.landmarks = d.refs[q.ref].landmarks;
        RelocResult r;
        if (matcher_name == "ingest") {
          const auto t0 = std::chrono::steady_clock::now();
          const MatchSet m = ingest_matches(fs::path(dataset_path) / "matches" / (std::to_string(j) + ".csv"), d.K, min_conf);
          r = localize_from_matches(node.pose, m, q.observation, d.K, pnp);
          r.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        } else {
          const Matcher& m = matcher_name == "oracle" ? static_cast<const Matcher&>(oracle) : classical;
          r = localize_against_node(node, q.observation, d.K, m, pnp);
        }
        if (per.is_open()) {
          const bool ok = r.status == RelocStatus::Success;
          per << j << ',' << q.ref << ',' << status_name(r.status) << ',' << r.inliers << ',' << r.total << ','
              << (ok ? format_double((r.pose.translation() - q.gt_pose.translation()).norm(), 9) : "") << ','
              << (ok ? format_double(rotation_angle(r.pose.rotation(), q.gt_pose.rotation()) * 180.0 / std::numbers::pi, 9) : "")
              << ',' << format_double(r.time_ms, 6) << '\n';
        }
        results.emplace_back(r, q.gt_pose);
      }
      const RelocMetrics m = compute_reloc_metrics(results);
      std::ofstream o(out);
      if (!o) throw FormatError(out + ": cannot write");
      o << format_reloc_metrics(m);
      std::cout << format_reloc_metrics(m);
    } else if (*eval_ate) {
      const AteReport r = compute_ate(read_tum(gt_path), read_tum(est_path), max_dt);
      std::cout << "ate_rmse_m=" << format_double(r.rmse, 9) << " matched=" << r.matched << '\n';
      if (!out.empty()) {
        std::ofstream o(out);
        o << "index,error_m\n";
        for (std::size_t i = 0; i < r.errors.size(); ++i) o << i << ',' << format_double(r.errors[i], 9) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
