#include "vloc/trajectory.hpp"

#include "vloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vloc {

void Segment::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Pose& p = frames[i].pose;
    if (!p.translation().allFinite() || !p.rotation().coeffs().allFinite()) {
      throw std::invalid_argument("segment: non-finite pose at frame " + std::to_string(i));
    }
    if (i > 0 && !(frames[i].timestamp > frames[i - 1].timestamp)) {
      throw std::invalid_argument("segment: timestamps not strictly increasing at frame " +
                                  std::to_string(i));
    }
  }
}

void write_tum(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  for (const TimedPose& tp : traj) {
    out << format_double(tp.timestamp) << ' ' << format_pose(tp.pose) << '\n';
  }
}

Trajectory read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double t;
    if (!(ls >> t)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": missing timestamp");
    }
    std::string rest;
    std::getline(ls, rest);
    try {
      traj.push_back({t, parse_pose(rest)});
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return traj;
}

void write_odometry_csv(const std::filesystem::path& path,
                        const std::vector<OdometrySample>& odom) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "timestamp,x,y,z,qw,qx,qy,qz\n";
  for (const OdometrySample& s : odom) {
    std::string p = format_pose(s.delta);
    std::replace(p.begin(), p.end(), ' ', ',');
    out << format_double(s.timestamp) << ',' << p << '\n';
  }
}

std::vector<OdometrySample> read_odometry_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::vector<OdometrySample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("timestamp", 0) == 0)) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double t;
    if (!(ls >> t)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad row");
    std::string rest;
    std::getline(ls, rest);
    try {
      out.push_back({t, parse_pose(rest)});
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

AteReport compute_ate(const Trajectory& gt, const Trajectory& est, double max_dt) {
  if (gt.empty() || est.empty()) throw NoMatches("compute_ate: empty trajectory");
  std::vector<std::size_t> order(gt.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gt[a].timestamp < gt[b].timestamp; });

  AteReport report;
  double sum_sq = 0.0;
  for (const TimedPose& e : est) {
    auto it = std::lower_bound(order.begin(), order.end(), e.timestamp,
                               [&](std::size_t i, double t) { return gt[i].timestamp < t; });
    const TimedPose* best = nullptr;
    double best_dt = max_dt;
    auto consider = [&](std::size_t i) {
      const double dt = std::abs(gt[i].timestamp - e.timestamp);
      if (dt <= best_dt && (best == nullptr || dt < best_dt)) {
        best = &gt[i];
        best_dt = dt;
      }
    };
    if (it != order.end()) consider(*it);
    if (it != order.begin()) consider(*std::prev(it));
    if (best == nullptr) continue;
    const double err = (e.pose.translation() - best->pose.translation()).norm();
    report.errors.push_back(err);
    sum_sq += err * err;
  }
  report.matched = report.errors.size();
  if (report.matched == 0) throw NoMatches("compute_ate: no poses associated within max_dt");
  report.rmse = std::sqrt(sum_sq / double(report.matched));
  return report;
}

}  // namespace vloc
