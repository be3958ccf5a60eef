#include "vloc/dataset.hpp"

#include "vloc/errors.hpp"
#include "vloc/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vloc {

namespace fs = std::filesystem;

namespace {

std::string csv_pose(const Pose& p) {
  std::string s = format_pose(p);
  std::replace(s.begin(), s.end(), ' ', ',');
  return s;
}

/// Reads a headed CSV into rows of doubles with exactly `n` fields.
std::vector<std::vector<double>> read_rows(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof() || row.size() != n) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(n) + " numeric fields");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Pose row_pose(const std::vector<double>& r, std::size_t at) {
  return {Vec3(r[at], r[at + 1], r[at + 2]), Quat(r[at + 3], r[at + 4], r[at + 5], r[at + 6])};
}

std::string name(std::size_t i, const char* ext) { return std::to_string(i) + ext; }

}  // namespace

void write_intrinsics(const fs::path& path, const CameraIntrinsics& K) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << format_double(K.fx) << ' ' << format_double(K.fy) << ' ' << format_double(K.cx) << ' '
      << format_double(K.cy) << ' ' << K.width << ' ' << K.height << '\n';
}

CameraIntrinsics read_intrinsics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  CameraIntrinsics K;
  if (!(in >> K.fx >> K.fy >> K.cx >> K.cy >> K.width >> K.height)) {
    throw FormatError(path.string() + ": expected 'fx fy cx cy width height'");
  }
  K.validate();
  return K;
}

void write_landmarks(const fs::path& path, const std::vector<LandmarkObservation>& lm) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "id,u,v,depth\n";
  for (const auto& l : lm) {
    out << l.id << ',' << format_double(l.pixel.x()) << ',' << format_double(l.pixel.y()) << ','
        << format_double(l.depth) << '\n';
  }
}

std::vector<LandmarkObservation> read_landmarks(const fs::path& path) {
  std::vector<LandmarkObservation> out;
  for (const auto& r : read_rows(path, 4)) {
    out.push_back({static_cast<std::int64_t>(r[0]), Vec2(r[1], r[2]), r[3]});
  }
  return out;
}

void write_segment_dir(const fs::path& dir, const SegmentData& data) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "landmarks");
  write_intrinsics(dir / "intrinsics.txt", data.K);
  std::ofstream frames(dir / "frames.csv");
  frames << "index,timestamp,x,y,z,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < data.segment.size(); ++i) {
    const SegmentFrame& f = data.segment.frames[i];
    frames << i << ',' << format_double(f.timestamp) << ',' << csv_pose(f.pose) << '\n';
    write_pgm(dir / "images" / name(i, ".pgm"), f.observation.color);
    if (f.observation.has_depth()) write_depth_f32(dir / "depth" / name(i, ".f32"), f.observation.depth);
    write_landmarks(dir / "landmarks" / name(i, ".csv"), f.observation.landmarks);
  }
  write_odometry_csv(dir / "odometry.csv", data.odometry);
  write_tum(dir / "gt_trajectory.txt", data.ground_truth);
}

SegmentData read_segment_dir(const fs::path& dir) {
  SegmentData d;
  d.K = read_intrinsics(dir / "intrinsics.txt");
  const auto rows = read_rows(dir / "frames.csv", 9);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i][0] != double(i)) {
      throw FormatError((dir / "frames.csv").string() + ": frame indices must be 0..n-1 in order");
    }
    SegmentFrame f;
    f.timestamp = rows[i][1];
    f.pose = row_pose(rows[i], 2);
    f.observation.color = read_pgm(dir / "images" / name(i, ".pgm"));
    const fs::path dp = dir / "depth" / name(i, ".f32");
    if (fs::exists(dp)) {
      f.observation.depth = read_depth_f32(dp, f.observation.color.width, f.observation.color.height);
    }
    const fs::path lp = dir / "landmarks" / name(i, ".csv");
    if (fs::exists(lp)) f.observation.landmarks = read_landmarks(lp);
    d.segment.frames.push_back(std::move(f));
  }
  d.segment.validate();
  if (fs::exists(dir / "odometry.csv")) d.odometry = read_odometry_csv(dir / "odometry.csv");
  if (fs::exists(dir / "gt_trajectory.txt")) d.ground_truth = read_tum(dir / "gt_trajectory.txt");
  return d;
}

void write_reloc_dataset(const fs::path& dir, const RelocDataset& data) {
  fs::create_directories(dir / "refs" / "landmarks");
  fs::create_directories(dir / "queries" / "depth");
  fs::create_directories(dir / "queries" / "landmarks");
  write_intrinsics(dir / "intrinsics.txt", data.K);
  std::ofstream refs(dir / "refs" / "poses.csv");
  refs << "i,x,y,z,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < data.refs.size(); ++i) {
    refs << i << ',' << csv_pose(data.refs[i].pose) << '\n';
    write_pgm(dir / "refs" / name(i, ".pgm"), data.refs[i].image);
    write_landmarks(dir / "refs" / "landmarks" / name(i, ".csv"), data.refs[i].landmarks);
  }
  std::ofstream qs(dir / "queries" / "gt_poses.csv");
  qs << "j,ref,x,y,z,qw,qx,qy,qz\n";
  for (std::size_t j = 0; j < data.queries.size(); ++j) {
    const RelocQuery& q = data.queries[j];
    qs << j << ',' << q.ref << ',' << csv_pose(q.gt_pose) << '\n';
    write_pgm(dir / "queries" / name(j, ".pgm"), q.observation.color);
    write_depth_f32(dir / "queries" / "depth" / name(j, ".f32"), q.observation.depth);
    write_landmarks(dir / "queries" / "landmarks" / name(j, ".csv"), q.observation.landmarks);
  }
}

RelocDataset read_reloc_dataset(const fs::path& dir) {
  RelocDataset d;
  d.K = read_intrinsics(dir / "intrinsics.txt");
  const auto refs = read_rows(dir / "refs" / "poses.csv", 8);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    RelocRef r;
    r.pose = row_pose(refs[i], 1);
    r.image = read_pgm(dir / "refs" / name(i, ".pgm"));
    const fs::path lp = dir / "refs" / "landmarks" / name(i, ".csv");
    if (fs::exists(lp)) r.landmarks = read_landmarks(lp);
    d.refs.push_back(std::move(r));
  }
  const auto qs = read_rows(dir / "queries" / "gt_poses.csv", 9);
  for (std::size_t j = 0; j < qs.size(); ++j) {
    RelocQuery q;
    q.ref = static_cast<int>(qs[j][1]);
    if (q.ref < 0 || q.ref >= static_cast<int>(d.refs.size())) {
      throw FormatError((dir / "queries" / "gt_poses.csv").string() + ": query " +
                        std::to_string(j) + " references unknown ref " + std::to_string(q.ref));
    }
    q.gt_pose = row_pose(qs[j], 2);
    q.observation.color = read_pgm(dir / "queries" / name(j, ".pgm"));
    q.observation.depth = read_depth_f32(dir / "queries" / "depth" / name(j, ".f32"),
                                         q.observation.color.width, q.observation.color.height);
    const fs::path lp = dir / "queries" / "landmarks" / name(j, ".csv");
    if (fs::exists(lp)) q.observation.landmarks = read_landmarks(lp);
    d.queries.push_back(std::move(q));
  }
  return d;
}

RelocDataset generate_reloc_dataset(const sim::SimWorld& world, const std::vector<Vec2>& route,
                                    const CameraIntrinsics& K, const RelocGenOptions& options) {
  if (!(options.spacing > 0.0)) throw std::invalid_argument("generate_reloc_dataset: spacing must be positive");
  RelocDataset d;
  d.K = K;
  Rng rng(hash_combine(options.seed, 0x7e10c));
  double next = 0.0, walked = 0.0;
  for (std::size_t i = 1; i < route.size(); ++i) {
    const Vec2 a = route[i - 1], b = route[i];
    const double len = (b - a).norm();
    if (len < 1e-9) continue;
    const double yaw = std::atan2(b.y() - a.y(), b.x() - a.x());
    while (next <= walked + len) {
      const Vec2 p = a + (b - a) * ((next - walked) / len);
      next += options.spacing;
      if (world.disc_collides(p, 0.2)) continue;
      const Pose ref_pose = world.camera_pose(p.x(), p.y(), yaw);
      Pose q_pose;
      bool found = false;
      for (int attempt = 0; attempt < 50 && !found; ++attempt) {
        const double r = options.max_offset * std::sqrt(rng.uniform());
        const double th = rng.uniform(0.0, 2.0 * 3.14159265358979);
        const Vec2 q = p + r * Vec2(std::cos(th), std::sin(th));
        const double qyaw = yaw + rng.uniform(-options.max_yaw, options.max_yaw);
        if (world.disc_collides(q, 0.2)) continue;
        q_pose = world.camera_pose(q.x(), q.y(), qyaw);
        found = true;
      }
      if (!found) continue;
      sim::SimFrame ref = world.render(ref_pose, K);
      RelocRef rr{ref_pose, std::move(ref.observation.color), std::move(ref.observation.landmarks)};
      d.refs.push_back(std::move(rr));
      RelocQuery rq;
      rq.ref = static_cast<int>(d.refs.size()) - 1;
      rq.gt_pose = q_pose;
      rq.observation = world.render(q_pose, K).observation;
      d.queries.push_back(std::move(rq));
    }
    walked += len;
  }
  return d;
}

}  // namespace vloc
