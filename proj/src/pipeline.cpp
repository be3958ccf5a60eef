#include "vloc/pipeline.hpp"

#include "vloc/errors.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace vloc {

std::string mode_name(Mode m) { return m == Mode::Lost ? "Lost" : "Tracking"; }

namespace {

double heading_gap(const Pose& a, const Pose& b) {
  return std::abs(std::remainder(a.yaw() - b.yaw(), 2.0 * std::numbers::pi));
}

}  // namespace

Pipeline::Pipeline(const TopoMetricMap& map, const Matcher& matcher, CameraIntrinsics K,
                   PipelineConfig config)
    : map_(map), matcher_(matcher), K_(K), cfg_(config) {
  if (map_.nodes.empty()) throw EmptyMap("pipeline: map has no nodes");
}

Vec6 Pipeline::prior_sigmas(std::size_t inliers) const {
  const double s = std::min(1.0, double(cfg_.pnp.min_inliers) / double(std::max<std::size_t>(inliers, 1)));
  Vec6 v;
  v << Vec3::Constant(cfg_.prior_sigma_t * s), Vec3::Constant(cfg_.prior_sigma_r * s);
  return v;
}

Vec6 Pipeline::odom_sigmas(const Pose& delta) const {
  Vec6 v;
  v << Vec3::Constant(cfg_.odom_sigma_t + cfg_.odom_sigma_t_rel * delta.translation().norm()),
      Vec3::Constant(cfg_.odom_sigma_r);
  return v;
}

void Pipeline::emit(double timestamp) {
  const Pose p = graph_.current_pose().first;
  if (!emitted_.empty() && emitted_.back().timestamp == timestamp) {
    emitted_.back().pose = p;
  } else {
    emitted_.push_back({timestamp, p});
  }
}

std::optional<Pose> Pipeline::try_local(const Observation& obs, double timestamp,
                                        const Descriptor& q, FrameLog& entry) {
  // Nearest node to the prior, preferring nodes that look the same way.
  const Pose& prior = *prior_;
  auto gated = [&](const MapNode& n) { return heading_gap(n.pose, prior) <= cfg_.heading_gate; };
  int nearest = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < 2 && nearest < 0; ++pass) {
    for (const MapNode& n : map_.nodes) {
      if (pass == 0 && !gated(n)) continue;
      const double d = (n.pose.translation() - prior.translation()).squaredNorm();
      if (d < best_d) {
        best_d = d;
        nearest = n.id;
      }
    }
  }
  std::vector<int> candidates{nearest};
  for (int nb : map_.cvg_neighbors(nearest))
    if (gated(map_.nodes[nb])) candidates.push_back(nb);
  int ref = nearest;
  double ref_sim = -2.0;
  for (int c : candidates) {
    const double s = similarity(q, map_.nodes[c].descriptor);
    if (s > ref_sim || (s == ref_sim && c < ref)) {
      ref_sim = s;
      ref = c;
    }
  }

  const RelocResult r = localize_against_node(map_.nodes[ref], obs, K_, matcher_, cfg_.pnp);
  entry.reference_node = ref;
  entry.inliers = r.inliers;
  entry.total = r.total;
  entry.status = status_name(r.status);
  if (r.status != RelocStatus::Success) {
    if (++failures_ >= cfg_.max_failures) {
      mode_ = Mode::Lost;
      failures_ = 0;
      prior_.reset();
    }
    return std::nullopt;
  }

  failures_ = 0;
  if (graph_.priors().empty()) {
    // First confirmed fix since GL. The retrieved node pose was only a guess
    // and, held fixed outside the window, it would pin the chain in place.
    graph_ = FusionGraph();
    graph_.add_state(r.pose, timestamp);
  }
  graph_.add_vloc_fix(graph_.nearest_state(timestamp), r.pose, prior_sigmas(r.inliers));
  try {
    graph_.optimize(cfg_.window, cfg_.lm);
  } catch (const NearSingularRotation&) {
    // A wildly inconsistent fix; keep the propagated estimate.
  } catch (const SingularNormalEquations&) {
  }
  prior_ = graph_.current_pose().first;
  emit(timestamp);
  return r.pose;
}

std::optional<Pose> Pipeline::on_observation(const Observation& obs, double timestamp) {
  if (timestamp < last_time_) {
    throw NonMonotonicTimestamp("on_observation: timestamp " + format_double(timestamp) +
                                " is before " + format_double(last_time_));
  }
  last_time_ = timestamp;
  const Descriptor q = extract_descriptor(obs.color);
  const auto top = top_k(q, map_, 1).ranked.front();

  FrameLog entry;
  entry.timestamp = timestamp;
  entry.sim_top1 = top.second;
  std::optional<Pose> fix;
  if (mode_ == Mode::Lost) {
    if (top.second >= cfg_.gl_min_sim) {
      mode_ = Mode::Tracking;
      failures_ = 0;
      prior_ = map_.nodes[top.first].pose;
      // Start a fresh fusion chain at the retrieved pose; the dead-reckoned
      // chain from before is no longer trusted.
      graph_ = FusionGraph();
      graph_.add_state(*prior_, timestamp);
      emit(timestamp);
      fix = try_local(obs, timestamp, q, entry);
    } else {
      entry.status = "GLRejected";
    }
  } else {
    fix = try_local(obs, timestamp, q, entry);
  }
  entry.mode = mode_;
  log_.push_back(entry);
  return fix;
}

Pose Pipeline::on_odometry(const Pose& delta, double timestamp) {
  if (timestamp < last_time_) {
    throw NonMonotonicTimestamp("on_odometry: timestamp " + format_double(timestamp) +
                                " is before " + format_double(last_time_));
  }
  last_time_ = timestamp;
  if (graph_.empty()) throw NotLocalized("on_odometry: no pose has been established yet");
  const Pose p = graph_.propagate(delta, odom_sigmas(delta), timestamp);
  if (mode_ == Mode::Lost) throw NotLocalized("on_odometry: pipeline is lost");
  prior_ = p;
  emit(timestamp);
  return p;
}

Trajectory Pipeline::batch_trajectory() const {
  FusionGraph g = graph_;
  if (!g.priors().empty()) g.optimize(std::nullopt, cfg_.lm);
  Trajectory out;
  for (std::size_t i = 0; i < g.size(); ++i) out.push_back({g.timestamps()[i], g.states()[i]});
  return out;
}

void write_frame_log(const std::filesystem::path& path, const std::vector<FrameLog>& log) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "timestamp,mode,reference_node,inliers,total,status,sim_top1\n";
  for (const FrameLog& f : log) {
    out << format_double(f.timestamp) << ',' << mode_name(f.mode) << ',' << f.reference_node << ','
        << f.inliers << ',' << f.total << ',' << f.status << ',' << format_double(f.sim_top1, 9)
        << '\n';
  }
}

}  // namespace vloc
