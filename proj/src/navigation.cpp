#include "vloc/navigation.hpp"

#include "vloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>

namespace vloc {

GlobalPlan plan_global(const TopoMetricMap& map, int start, int goal) {
  const int n = static_cast<int>(map.nodes.size());
  if (start < 0 || start >= n || goal < 0 || goal >= n) {
    throw std::out_of_range("plan_global: unknown node");
  }
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const CngEdge& e : map.cng_edges) {
    adj[e.a].emplace_back(e.b, e.weight);
    adj[e.b].emplace_back(e.a, e.weight);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<int> prev(n, -1);
  std::vector<bool> done(n, false);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[start] = 0.0;
  pq.push({0.0, start});
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (done[u]) continue;
    done[u] = true;
    if (u == goal) break;
    for (const auto& [v, w] : adj[u]) {
      if (done[v]) continue;
      if (d + w < dist[v]) {
        dist[v] = d + w;
        prev[v] = u;
        pq.push({dist[v], v});
      }
    }
  }
  if (!std::isfinite(dist[goal])) {
    throw NoPath("plan_global: node " + std::to_string(goal) + " is not reachable from node " +
                 std::to_string(start));
  }
  GlobalPlan plan;
  for (int v = goal; v != -1; v = prev[v]) plan.node_path.push_back(v);
  std::reverse(plan.node_path.begin(), plan.node_path.end());
  plan.cost = dist[goal];
  return plan;
}

GoalMatch resolve_goal(const TopoMetricMap& map, const GrayImage& goal_image) {
  const auto top = top_k(extract_descriptor(goal_image), map, 1).ranked.front();
  return {top.first, top.second};
}

std::optional<Vec3> next_subgoal(GlobalPlan& plan, const TopoMetricMap& map,
                                 const Pose& robot_pose, const NavParams& params) {
  if (plan.node_path.empty()) return std::nullopt;
  auto pos = [&](std::size_t k) { return map.nodes.at(plan.node_path[k]).pose.translation(); };
  auto planar_dist = [&](std::size_t k) {
    return (pos(k) - robot_pose.translation()).head<2>().norm();
  };
  const std::size_t last = plan.node_path.size() - 1;
  while (plan.subgoal_index < last && planar_dist(plan.subgoal_index) < params.switch_radius) {
    ++plan.subgoal_index;
  }
  if (plan.subgoal_index == last && planar_dist(last) < params.arrive_radius) return std::nullopt;
  return robot_pose.inverse() * pos(plan.subgoal_index);
}

Primitive make_arc(double curvature, double length, double ds) {
  Primitive p;
  p.curvature = curvature;
  const int n = std::max(1, static_cast<int>(std::ceil(length / ds - 1e-9)));
  for (int i = 1; i <= n; ++i) {
    const double s = std::min(length, i * ds);
    if (curvature == 0.0) {
      p.samples.emplace_back(s, 0.0);
    } else {
      p.samples.emplace_back(std::sin(curvature * s) / curvature,
                             (1.0 - std::cos(curvature * s)) / curvature);
    }
  }
  return p;
}

std::vector<Vec2> obstacle_points(const DepthImage& depth, const CameraIntrinsics& K,
                                  const NavParams& params) {
  std::vector<Vec2> out;
  const Mat3 R = body_from_optical().rotation_matrix();
  const double reach = params.primitive_length + params.robot_radius + 0.5;
  const DepthRange range;
  const int stride = std::max(1, params.depth_stride);
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const double d = depth.at(u, v);
      if (!range.contains(d)) continue;
      const Vec3 p = R * unproject(K, Vec2(u, v), d, range);
      if (p.z() < -params.camera_height + params.obstacle_min_height) continue;
      if (p.head<2>().norm() > reach) continue;
      out.push_back(p.head<2>());
    }
  }
  return out;
}

bool arc_collides(const Primitive& arc, const std::vector<Vec2>& obstacles, double radius) {
  const double r2 = radius * radius;
  for (const Vec2& s : arc.samples)
    for (const Vec2& o : obstacles)
      if ((s - o).squaredNorm() < r2) return true;
  return false;
}

LocalCommand plan_local(const DepthImage& depth, const CameraIntrinsics& K, const Vec3& subgoal,
                        const NavParams& params) {
  LocalCommand cmd;
  const Vec2 goal = subgoal.head<2>();
  const double bearing = std::atan2(goal.y(), goal.x());
  const double dist = goal.norm();
  auto rotate = [&] {
    cmd.v = 0.0;
    cmd.omega = (bearing >= 0.0 ? 1.0 : -1.0) * params.max_angular;
    cmd.primitive = -1;
    return cmd;
  };
  if (std::abs(bearing) > params.rotate_bearing) return rotate();

  const std::vector<Vec2> obstacles = obstacle_points(depth, K, params);
  const double len = std::clamp(dist, params.sample_step, params.primitive_length);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < params.curvatures.size(); ++i) {
    const double k = params.curvatures[i];
    const Primitive arc = make_arc(k, len, params.sample_step);
    if (arc_collides(arc, obstacles, params.robot_radius)) continue;
    const double score = (arc.samples.back() - goal).norm() + params.curvature_cost * std::abs(k);
    if (score < best) {
      best = score;
      cmd.primitive = static_cast<int>(i);
    }
  }
  if (cmd.primitive < 0) return rotate();
  cmd.v = std::min(params.max_linear, std::max(0.2, dist));
  cmd.omega = std::clamp(params.curvatures[cmd.primitive] * cmd.v, -params.max_angular,
                         params.max_angular);
  return cmd;
}

bool NavReport::all_success() const {
  for (const auto& g : goals)
    if (!g.success) return false;
  return !goals.empty();
}

NavReport run_mission(const sim::SimWorld& world, const TopoMetricMap& map,
                      const std::vector<GrayImage>& goal_images, const Pose& start,
                      const Matcher& matcher, const CameraIntrinsics& K, const NavConfig& config,
                      std::uint64_t seed) {
  const NavParams& P = config.params;
  const double dt = 1.0 / config.odom_hz;
  const long plan_every = std::max(1L, std::lround(config.odom_hz / config.plan_hz));
  const long vloc_every = std::max(1L, std::lround(config.odom_hz / config.vloc_hz));

  NavReport report;
  sim::SimRobot robot(start, config.odometry, seed);
  robot.max_linear = P.max_linear;
  robot.max_angular = P.max_angular;
  Pipeline pipeline(map, matcher, K, config.pipeline);
  long tick = 0;
  auto now = [&] { return double(tick) * dt; };

  pipeline.on_observation(world.render(robot.pose(), K).observation, now());
  report.ground_truth.push_back({now(), robot.pose()});

  for (std::size_t gi = 0; gi < goal_images.size(); ++gi) {
    NavGoalReport g;
    g.goal_index = static_cast<int>(gi);
    const GoalMatch goal = resolve_goal(map, goal_images[gi]);
    g.goal_node = goal.node;
    g.similarity = goal.similarity;
    const double t0 = now();
    std::optional<GlobalPlan> plan;
    LocalCommand cmd;
    bool done = false;
    while (!done) {
      if (now() - t0 > config.goal_timeout) {
        g.status = "Timeout";
        break;
      }
      if (tick % plan_every == 0) {
        // A GL prior is only trusted once local localization has confirmed it.
        const bool verified = pipeline.mode() == Mode::Tracking && !pipeline.fusion().priors().empty();
        if (verified) {
          const Pose est = *pipeline.prior_pose();
          if (!plan) {
            const int s = map.nearest_node(est.translation());
            try {
              plan = plan_global(map, s, goal.node);
            } catch (const NoPath&) {
              g.status = "NoPath";
              break;
            }
            g.shortest_path = plan->cost;
          }
          const auto sub = next_subgoal(*plan, map, est, P);
          if (!sub) {
            done = true;
            break;
          }
          cmd = plan_local(world.render(robot.pose(), K).observation.depth, K, *sub, P);
        } else {
          // Turn on the spot until a fix confirms the place.
          cmd = {0.0, 0.5 * P.max_angular, -1};
        }
      }
      const Pose before = robot.pose();
      const sim::StepResult step = robot.step(world, cmd.v, cmd.omega, dt);
      ++tick;
      g.path_length += (step.gt_pose.translation() - before.translation()).norm();
      report.ground_truth.push_back({now(), step.gt_pose});
      try {
        pipeline.on_odometry(step.odom_delta, now());
      } catch (const NotLocalized&) {
      }
      if (tick % vloc_every == 0) {
        pipeline.on_observation(world.render(robot.pose(), K).observation, now());
      }
    }
    g.time = now() - t0;
    g.final_error =
        (robot.pose().translation() - map.nodes[goal.node].pose.translation()).head<2>().norm();
    if (done) {
      g.success = g.final_error <= P.goal_radius;
      g.status = g.success ? "Success" : "Missed";
    }
    report.goals.push_back(g);
  }
  report.estimated = pipeline.trajectory();
  report.frames = pipeline.log();
  return report;
}

NavGoalReport run_navigation(const sim::SimWorld& world, const TopoMetricMap& map,
                             const GrayImage& goal_image, const Pose& start,
                             const Matcher& matcher, const CameraIntrinsics& K,
                             const NavConfig& config, std::uint64_t seed) {
  return run_mission(world, map, {goal_image}, start, matcher, K, config, seed).goals.front();
}

std::vector<int> spread_goal_nodes(const TopoMetricMap& map, const Vec3& start, std::size_t count) {
  if (count > map.nodes.size()) throw std::invalid_argument("spread_goal_nodes: more goals than nodes");
  std::vector<double> gap(map.nodes.size());
  for (const MapNode& n : map.nodes) gap[n.id] = (n.pose.translation() - start).norm();
  std::vector<int> out;
  while (out.size() < count) {
    const int pick = static_cast<int>(std::max_element(gap.begin(), gap.end()) - gap.begin());
    out.push_back(pick);
    const Vec3& p = map.nodes[pick].pose.translation();
    for (const MapNode& n : map.nodes) gap[n.id] = std::min(gap[n.id], (n.pose.translation() - p).norm());
  }
  return out;
}

void write_nav_report(const std::filesystem::path& path, const NavReport& report) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "goal_index,goal_node,similarity,success,time_s,path_length_m,shortest_path_m,"
         "final_error_m,status\n";
  for (const NavGoalReport& g : report.goals) {
    out << g.goal_index << ',' << g.goal_node << ',' << format_double(g.similarity, 9) << ','
        << (g.success ? 1 : 0) << ',' << format_double(g.time, 9) << ','
        << format_double(g.path_length, 9) << ',' << format_double(g.shortest_path, 9) << ','
        << format_double(g.final_error, 9) << ',' << g.status << '\n';
  }
}

}  // namespace vloc
