#include "vloc/simworld.hpp"

#include "vloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>

namespace vloc::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t texel_hash(std::uint64_t seed, std::uint64_t a, std::int64_t b, std::int64_t c) {
  std::uint64_t h = hash_combine(seed, a);
  h = hash_combine(h, static_cast<std::uint64_t>(b));
  return hash_combine(h, static_cast<std::uint64_t>(c));
}

std::int64_t cell_of(double x, double size) { return static_cast<std::int64_t>(std::floor(x / size)); }

std::int32_t wall_surface(const GridWorld& g, int ix, int iy, int face) {
  return 1 + 4 * (iy * g.width + ix) + face;
}

void carve(GridWorld& g, int x0, int y0, int x1, int y1) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) g.set_occupied(x, y, false);
}

void fill(GridWorld& g, int x0, int y0, int x1, int y1) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) g.set_occupied(x, y, true);
}

GridWorld blank(int w, int h, std::uint64_t seed, bool solid) {
  GridWorld g(w, h, 1.0, 2.5, seed);
  if (solid) {
    std::fill(g.occupancy.begin(), g.occupancy.end(), 1);
  } else {
    for (int x = 0; x < w; ++x) {
      g.set_occupied(x, 0, true);
      g.set_occupied(x, h - 1, true);
    }
    for (int y = 0; y < h; ++y) {
      g.set_occupied(0, y, true);
      g.set_occupied(w - 1, y, true);
    }
  }
  return g;
}

std::vector<Vec2> tour(const GridWorld& g, const std::vector<Vec2>& places) {
  std::vector<Vec2> route;
  for (std::size_t i = 0; i + 1 < places.size(); ++i) {
    auto leg = grid_route(g, places[i], places[i + 1]);
    if (!route.empty()) leg.erase(leg.begin());
    route.insert(route.end(), leg.begin(), leg.end());
  }
  if (route.empty() && !places.empty()) route.push_back(places.front());
  return route;
}

GeneratedWorld make_corridor(std::uint64_t seed) {
  Rng rng(hash_combine(seed, 1));
  GridWorld g = blank(34, 9, seed, true);
  carve(g, 1, 3, 32, 5);
  // Alcoves break the translational symmetry of the corridor.
  for (int x = 3; x < 31; x += 3) {
    const int jitter = static_cast<int>(rng.index(2));
    const int ax = x + jitter;
    if (rng.uniform() < 0.5) {
      carve(g, ax, 2, ax, 2);
      if (rng.uniform() < 0.5) carve(g, ax, 1, ax, 1);
    } else {
      carve(g, ax, 6, ax, 6);
      if (rng.uniform() < 0.5) carve(g, ax, 7, ax, 7);
    }
  }
  std::vector<Vec2> places = {{2.5, 4.5}, {31.5, 4.5}, {2.5, 4.5}};
  return {g, tour(g, places)};
}

GeneratedWorld make_rooms(std::uint64_t seed) {
  Rng rng(hash_combine(seed, 2));
  constexpr int kCols = 3, kRows = 2, kRoom = 6;
  const int w = kCols * (kRoom + 1) + 1;
  const int h = kRows * (kRoom + 1) + 1;
  GridWorld g = blank(w, h, seed, true);
  auto x0 = [](int c) { return 1 + c * (kRoom + 1); };
  auto y0 = [](int r) { return 1 + r * (kRoom + 1); };
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c < kCols; ++c) carve(g, x0(c), y0(r), x0(c) + kRoom - 1, y0(r) + kRoom - 1);
  // Horizontal doors (between columns), three cells wide.
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c + 1 < kCols; ++c) {
      const int dy = y0(r) + 1 + static_cast<int>(rng.index(kRoom - 4));
      carve(g, x0(c) + kRoom, dy, x0(c) + kRoom, dy + 2);
    }
  }
  // Vertical doors between the rows.
  for (int c = 0; c < kCols; ++c) {
    if (c != 1 && rng.uniform() < 0.5) continue;
    const int dx = x0(c) + 1 + static_cast<int>(rng.index(kRoom - 4));
    carve(g, dx, y0(1) - 1, dx + 2, y0(1) - 1);
  }
  // A pillar in some rooms, kept off the room centre lines.
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kCols; ++c) {
      if (rng.uniform() < 0.4) continue;
      const int px = x0(c) + (rng.uniform() < 0.5 ? 0 : kRoom - 1);
      const int py = y0(r) + (rng.uniform() < 0.5 ? 0 : kRoom - 1);
      g.set_occupied(px, py, true);
    }
  }
  auto centre = [&](int r, int c) {
    return Vec2(x0(c) + kRoom / 2.0, y0(r) + kRoom / 2.0);
  };
  std::vector<Vec2> places = {centre(0, 0), centre(0, 1), centre(0, 2),
                              centre(1, 2), centre(1, 1), centre(1, 0)};
  std::vector<Vec2> back(places.rbegin() + 1, places.rend());
  places.insert(places.end(), back.begin(), back.end());
  return {g, tour(g, places)};
}

GeneratedWorld make_campus(std::uint64_t seed) {
  Rng rng(hash_combine(seed, 3));
  constexpr int kBlocks = 3, kBlock = 5, kStreet = 3;
  const int n = 1 + kStreet + kBlocks * (kBlock + kStreet);
  GridWorld g = blank(n, n, seed, false);
  for (int j = 0; j < kBlocks; ++j) {
    for (int i = 0; i < kBlocks; ++i) {
      const int bx = 1 + kStreet + i * (kBlock + kStreet);
      const int by = 1 + kStreet + j * (kBlock + kStreet);
      fill(g, bx, by, bx + kBlock - 1, by + kBlock - 1);
      // Notches so facades differ from block to block.
      for (int k = 0; k < 3; ++k) {
        const int side = static_cast<int>(rng.index(4));
        const int off = 1 + static_cast<int>(rng.index(kBlock - 2));
        switch (side) {
          case 0: g.set_occupied(bx + off, by, false); break;
          case 1: g.set_occupied(bx + off, by + kBlock - 1, false); break;
          case 2: g.set_occupied(bx, by + off, false); break;
          default: g.set_occupied(bx + kBlock - 1, by + off, false); break;
        }
      }
    }
  }
  const double lo = 1 + kStreet / 2.0;
  const double hi = n - 1 - kStreet / 2.0;
  const double mid = 1 + kStreet + kBlock + kStreet / 2.0;
  std::vector<Vec2> places = {{lo, lo}, {hi, lo}, {hi, hi}, {lo, hi}, {lo, lo},
                              {mid, lo}, {mid, hi}, {mid, lo}, {lo, lo},
                              {lo, hi}, {hi, hi}, {hi, lo}, {lo, lo}};
  return {g, tour(g, places)};
}

}  // namespace

GridWorld::GridWorld(int w, int h, double cell, double wall, std::uint64_t seed)
    : width(w), height(h), cell_size(cell), wall_height(wall), texture_seed(seed),
      occupancy(std::size_t(std::max(w, 0)) * std::max(h, 0), 0) {}

bool GridWorld::occupied(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= width || iy >= height) return true;
  return occupancy[std::size_t(iy) * width + ix] != 0;
}

void GridWorld::set_occupied(int ix, int iy, bool value) {
  if (ix < 0 || iy < 0 || ix >= width || iy >= height) return;
  occupancy[std::size_t(iy) * width + ix] = value ? 1 : 0;
}

void GridWorld::validate() const {
  if (width < 3 || height < 3) throw std::invalid_argument("world: grid too small");
  if (!(cell_size > 0.0) || !(wall_height > 0.0)) {
    throw std::invalid_argument("world: cell_size and wall_height must be positive");
  }
  if (occupancy.size() != std::size_t(width) * height) {
    throw std::invalid_argument("world: occupancy size mismatch");
  }
  for (int x = 0; x < width; ++x) {
    if (!occupied(x, 0) || !occupied(x, height - 1)) {
      throw std::invalid_argument("world: boundary must be occupied");
    }
  }
  for (int y = 0; y < height; ++y) {
    if (!occupied(0, y) || !occupied(width - 1, y)) {
      throw std::invalid_argument("world: boundary must be occupied");
    }
  }
}

Preset parse_preset(const std::string& name) {
  if (name == "corridor") return Preset::Corridor;
  if (name == "rooms") return Preset::Rooms;
  if (name == "campus") return Preset::Campus;
  throw std::invalid_argument("unknown world preset '" + name + "'");
}

std::string preset_name(Preset p) {
  switch (p) {
    case Preset::Corridor: return "corridor";
    case Preset::Rooms: return "rooms";
    case Preset::Campus: return "campus";
  }
  return "?";
}

GeneratedWorld generate_world(Preset preset, std::uint64_t seed) {
  switch (preset) {
    case Preset::Corridor: return make_corridor(seed);
    case Preset::Rooms: return make_rooms(seed);
    case Preset::Campus: return make_campus(seed);
  }
  throw std::invalid_argument("unknown preset");
}

void write_world(const std::filesystem::path& path, const GridWorld& world) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << world.width << ' ' << world.height << ' ' << format_double(world.cell_size) << ' '
      << format_double(world.wall_height) << ' ' << world.texture_seed << '\n';
  for (int y = world.height - 1; y >= 0; --y) {
    for (int x = 0; x < world.width; ++x) out << (world.occupied(x, y) ? '#' : '.');
    out << '\n';
  }
}

GridWorld read_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ":1: missing header");
  std::istringstream hs(line);
  GridWorld g;
  if (!(hs >> g.width >> g.height >> g.cell_size >> g.wall_height >> g.texture_seed)) {
    throw FormatError(path.string() + ":1: malformed header");
  }
  if (g.width <= 0 || g.height <= 0) throw FormatError(path.string() + ":1: bad size");
  g.occupancy.assign(std::size_t(g.width) * g.height, 0);
  for (int row = 0; row < g.height; ++row) {
    if (!std::getline(in, line)) {
      throw FormatError(path.string() + ":" + std::to_string(row + 2) + ": missing grid row");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<int>(line.size()) != g.width) {
      throw FormatError(path.string() + ":" + std::to_string(row + 2) + ": row width mismatch");
    }
    const int y = g.height - 1 - row;
    for (int x = 0; x < g.width; ++x) {
      if (line[x] == '#') {
        g.set_occupied(x, y, true);
      } else if (line[x] != '.') {
        throw FormatError(path.string() + ":" + std::to_string(row + 2) + ": bad cell character");
      }
    }
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return g;
}

void write_waypoints(const std::filesystem::path& path, const std::vector<Vec2>& wp) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "x,y\n";
  for (const Vec2& p : wp) out << format_double(p.x()) << ',' << format_double(p.y()) << '\n';
}

std::vector<Vec2> read_waypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::string line;
  std::vector<Vec2> out;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("x", 0) == 0)) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double x, y;
    if (!(ls >> x >> y)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad row");
    out.emplace_back(x, y);
  }
  return out;
}

SimWorld::SimWorld(GridWorld grid, SimConfig config) : grid_(std::move(grid)), config_(config) {
  grid_.validate();
  if (!(config_.camera_height > 0.0 && config_.camera_height < grid_.wall_height)) {
    throw std::invalid_argument("camera height must lie between floor and wall top");
  }
  build_landmarks();
}

void SimWorld::build_landmarks() {
  const double cs = grid_.cell_size;
  for (int iy = 0; iy < grid_.height; ++iy) {
    for (int ix = 0; ix < grid_.width; ++ix) {
      if (!grid_.occupied(ix, iy)) continue;
      for (int face = 0; face < 4; ++face) {
        const int nx = ix + (face == 0 ? -1 : face == 1 ? 1 : 0);
        const int ny = iy + (face == 2 ? -1 : face == 3 ? 1 : 0);
        if (nx < 0 || ny < 0 || nx >= grid_.width || ny >= grid_.height) continue;
        if (grid_.occupied(nx, ny)) continue;
        const std::int32_t surface = wall_surface(grid_, ix, iy, face);
        Rng rng(hash_combine(grid_.texture_seed, static_cast<std::uint64_t>(surface)));
        for (int k = 0; k < config_.landmarks_per_face; ++k) {
          const double s = cs * rng.uniform(0.1, 0.9);
          const double z = rng.uniform(0.1, grid_.wall_height - 0.1);
          Vec3 p;
          switch (face) {
            case 0: p = {ix * cs, iy * cs + s, z}; break;
            case 1: p = {(ix + 1) * cs, iy * cs + s, z}; break;
            case 2: p = {ix * cs + s, iy * cs, z}; break;
            default: p = {ix * cs + s, (iy + 1) * cs, z}; break;
          }
          landmarks_.push_back({std::int64_t(surface) * config_.landmarks_per_face + k, p, surface});
        }
      }
    }
  }
}

RayHit SimWorld::cast(const Vec3& o, const Vec3& d) const {
  const double cs = grid_.cell_size;
  const double t_floor = d.z() < 0.0 ? -o.z() / d.z() : kInf;
  const double t_top = d.z() > 0.0 ? (grid_.wall_height - o.z()) / d.z() : kInf;
  const double t_exit = std::min(t_floor, t_top);

  auto finish_open = [&]() {
    RayHit hit;
    if (t_floor < kInf) {
      hit.t = t_floor;
      hit.surface = kFloor;
      hit.point = o + t_floor * d;
      hit.point.z() = 0.0;
    }
    return hit;
  };

  int ix = grid_.cell_x(o.x());
  int iy = grid_.cell_y(o.y());
  if (grid_.occupied(ix, iy)) {
    return RayHit{0.0, wall_surface(grid_, std::clamp(ix, 0, grid_.width - 1),
                                     std::clamp(iy, 0, grid_.height - 1), 0),
                  o};
  }
  const int step_x = d.x() > 0.0 ? 1 : (d.x() < 0.0 ? -1 : 0);
  const int step_y = d.y() > 0.0 ? 1 : (d.y() < 0.0 ? -1 : 0);
  auto next_x = [&]() {
    if (step_x == 0) return kInf;
    const double bx = (step_x > 0 ? ix + 1 : ix) * cs;
    return (bx - o.x()) / d.x();
  };
  auto next_y = [&]() {
    if (step_y == 0) return kInf;
    const double by = (step_y > 0 ? iy + 1 : iy) * cs;
    return (by - o.y()) / d.y();
  };
  while (true) {
    const double tx = next_x();
    const double ty = next_y();
    const double t = std::min(tx, ty);
    if (!(t < t_exit)) return finish_open();
    int face;
    if (tx <= ty) {
      ix += step_x;
      face = step_x > 0 ? 0 : 1;
    } else {
      iy += step_y;
      face = step_y > 0 ? 2 : 3;
    }
    if (grid_.occupied(ix, iy)) {
      RayHit hit;
      hit.t = t;
      hit.point = o + t * d;
      const int cx = std::clamp(ix, 0, grid_.width - 1);
      const int cy = std::clamp(iy, 0, grid_.height - 1);
      hit.surface = wall_surface(grid_, cx, cy, face);
      // Snap the coordinate normal to the face onto the face plane.
      if (face == 0) hit.point.x() = cx * cs;
      if (face == 1) hit.point.x() = (cx + 1) * cs;
      if (face == 2) hit.point.y() = cy * cs;
      if (face == 3) hit.point.y() = (cy + 1) * cs;
      return hit;
    }
  }
}

std::uint8_t SimWorld::texture(std::int32_t surface, const Vec3& p) const {
  const std::uint64_t seed = grid_.texture_seed;
  const double tx = config_.texel;
  if (surface == kSky) return 200;
  if (surface == kFloor) {
    const auto fx = static_cast<std::int64_t>(std::floor(p.x() / grid_.cell_size));
    const auto fy = static_cast<std::int64_t>(std::floor(p.y() / grid_.cell_size));
    const double base = 30.0 + double(texel_hash(seed, 0xF1, fx, fy) % 90);
    const double coarse = double(texel_hash(seed, 0xF3, cell_of(p.x(), 4.0 * tx), cell_of(p.y(), 4.0 * tx)) % 256);
    const double detail = double(texel_hash(seed, 0xF2, cell_of(p.x(), tx), cell_of(p.y(), tx)) % 256);
    return static_cast<std::uint8_t>(std::lround(0.35 * base + 0.4 * coarse + 0.15 * detail));
  }
  const int face = (surface - 1) % 4;
  const int cell = (surface - 1) / 4;
  const int ix = cell % grid_.width;
  const int iy = cell / grid_.width;
  const double s = (face <= 1) ? p.y() - iy * grid_.cell_size : p.x() - ix * grid_.cell_size;
  const double base = 60.0 + double(texel_hash(seed, 0xA1, surface, 0) % 160);
  // Two octaves: 4-texel blobs carry contrast that survives distance, the
  // fine texels add detail up close.
  const std::uint64_t salt = static_cast<std::uint64_t>(surface);
  const double coarse = double(texel_hash(seed, 0xA3 + salt, cell_of(s, 4.0 * tx), cell_of(p.z(), 4.0 * tx)) % 256);
  const double detail = double(texel_hash(seed, 0xA2 + salt, cell_of(s, tx), cell_of(p.z(), tx)) % 256);
  return static_cast<std::uint8_t>(std::lround(std::min(255.0, 0.3 * base + 0.5 * coarse + 0.2 * detail)));
}

SimFrame SimWorld::render(const Pose& pose, const CameraIntrinsics& K) const {
  const Vec3& o = pose.translation();
  if (grid_.occupied(grid_.cell_x(o.x()), grid_.cell_y(o.y())) || o.z() <= 0.0 ||
      o.z() >= grid_.wall_height) {
    throw PoseInCollision("render: camera at (" + format_double(o.x(), 6) + ", " +
                          format_double(o.y(), 6) + ") is inside an obstacle");
  }
  SimFrame frame;
  frame.gt_pose = pose;
  Observation& obs = frame.observation;
  obs.color = GrayImage(K.width, K.height);
  obs.depth = DepthImage(K.width, K.height, 0.0);
  frame.surface = Image<std::int32_t>(K.width, K.height, kSky);

  const Pose world_from_optical = to_optical(pose);
  const Mat3 R = world_from_optical.rotation_matrix();
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const Vec3 ray_opt((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      const RayHit hit = cast(o, R * ray_opt);
      frame.surface.at(u, v) = hit.surface;
      // 2x2 supersampled intensity; depth and surface stay at the centre ray.
      int sum = 0;
      for (const double dv : {-0.25, 0.25}) {
        for (const double du : {-0.25, 0.25}) {
          const Vec3 sub((u + du - K.cx) / K.fx, (v + dv - K.cy) / K.fy, 1.0);
          const RayHit h = cast(o, R * sub);
          sum += texture(h.surface, h.point);
        }
      }
      obs.color.at(u, v) = static_cast<std::uint8_t>((sum + 2) / 4);
      if (hit.surface != kSky) obs.depth.at(u, v) = hit.t;
    }
  }

  const Pose optical_from_world = world_from_optical.inverse();
  for (const Landmark& lm : landmarks_) {
    const Vec3 pc = optical_from_world * lm.position;
    const auto uv = project(K, pc);
    if (!uv || !config_.depth_range.contains(pc.z())) continue;
    // The 2x2 bilinear neighbourhood must lie inside the image and on the
    // landmark's own face so depth lookups at the landmark are exact.
    const int u0 = static_cast<int>(std::floor(uv->x()));
    const int v0 = static_cast<int>(std::floor(uv->y()));
    if (u0 + 1 >= K.width || v0 + 1 >= K.height) continue;
    bool same_face = true;
    for (int dv = 0; dv <= 1 && same_face; ++dv)
      for (int du = 0; du <= 1 && same_face; ++du)
        same_face = frame.surface.at(u0 + du, v0 + dv) == lm.surface;
    if (!same_face) continue;
    const Vec3 dir = (lm.position - o) / pc.z();
    const RayHit hit = cast(o, dir);
    if (hit.surface != lm.surface || std::abs(hit.t - pc.z()) > 1e-9 * std::max(1.0, pc.z())) continue;
    obs.landmarks.push_back({lm.id, *uv, pc.z()});
  }
  return frame;
}

bool SimWorld::disc_collides(const Vec2& c, double radius) const {
  const double cs = grid_.cell_size;
  const int x0 = grid_.cell_x(c.x() - radius), x1 = grid_.cell_x(c.x() + radius);
  const int y0 = grid_.cell_y(c.y() - radius), y1 = grid_.cell_y(c.y() + radius);
  for (int iy = y0; iy <= y1; ++iy) {
    for (int ix = x0; ix <= x1; ++ix) {
      if (!grid_.occupied(ix, iy)) continue;
      const double qx = std::clamp(c.x(), ix * cs, (ix + 1) * cs);
      const double qy = std::clamp(c.y(), iy * cs, (iy + 1) * cs);
      if ((Vec2(qx, qy) - c).squaredNorm() < radius * radius) return true;
    }
  }
  return false;
}

bool SimWorld::line_of_sight(const Vec2& a, const Vec2& b, double clearance) const {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / 0.05)));
  for (int i = 0; i <= n; ++i) {
    if (disc_collides(a + (b - a) * (double(i) / n), clearance)) return false;
  }
  return true;
}

OdometryNoise OdometryNoise::drift(double rate) {
  OdometryNoise n;
  n.trans_sigma = rate;
  n.rot_sigma = rate;
  n.trans_bias = rate;
  n.yaw_bias = rate * 0.1;
  n.yaw_sigma = rate * 0.1;
  return n;
}

SimRobot::SimRobot(Pose start, OdometryNoise noise, std::uint64_t seed)
    : pose_(std::move(start)), noise_(noise), rng_(seed) {}

StepResult SimRobot::step(const SimWorld& world, double v, double omega, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  v = std::clamp(v, -max_linear, max_linear);
  omega = std::clamp(omega, -max_angular, max_angular);
  const double dth = omega * dt;
  double dx, dy;
  if (std::abs(omega) < 1e-12) {
    dx = v * dt;
    dy = 0.0;
  } else {
    dx = v / omega * std::sin(dth);
    dy = v / omega * (1.0 - std::cos(dth));
  }
  const Pose motion = Pose::planar(dx, dy, 0.0, dth);
  const Pose next = pose_ * motion;
  StepResult res;
  double tdx = dx, tdy = dy, tdth = dth;
  if (world.disc_collides(next.translation().head<2>(), radius)) {
    res.blocked = true;
    tdx = tdy = tdth = 0.0;
  } else {
    pose_ = next;
  }
  res.gt_pose = pose_;
  const double dist = std::hypot(tdx, tdy);
  const double sd = std::sqrt(dist);
  const double nx = rng_.normal(), ny = rng_.normal(), nth = rng_.normal(), nw = rng_.normal();
  const double mx = tdx * (1.0 + noise_.trans_bias) + noise_.trans_sigma * sd * nx;
  const double my = tdy * (1.0 + noise_.trans_bias) + noise_.trans_sigma * sd * ny;
  const double mth = tdth + noise_.yaw_bias * dist + noise_.rot_sigma * std::abs(tdth) * nth +
                     noise_.yaw_sigma * sd * nw;
  res.odom_delta = Pose::planar(mx, my, 0.0, mth);
  return res;
}

GeneratedSegment generate_segment(const SimWorld& world, const std::vector<Vec2>& waypoints,
                                  const CameraIntrinsics& K, const SegmentRates& rates,
                                  const OdometryNoise& noise, std::uint64_t seed) {
  if (waypoints.empty()) throw std::invalid_argument("generate_segment: no waypoints");
  if (!(rates.odom_hz > 0.0)) throw std::invalid_argument("generate_segment: odom_hz must be positive");
  const double dt = 1.0 / rates.odom_hz;
  double yaw0 = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const Vec2 d = waypoints[i] - waypoints[0];
    if (d.norm() > 1e-9) {
      yaw0 = std::atan2(d.y(), d.x());
      break;
    }
  }
  SimRobot robot(world.camera_pose(waypoints[0].x(), waypoints[0].y(), yaw0), noise, seed);
  robot.max_linear = rates.max_speed;
  if (world.disc_collides(waypoints[0], robot.radius)) {
    throw PoseInCollision("generate_segment: start waypoint in collision");
  }

  GeneratedSegment out;
  long tick = 0;
  long last_capture_tick = -1;
  double travelled = 0.0;
  int captures = 0;
  auto capture = [&](double t) {
    SimFrame f = world.render(robot.pose(), K);
    out.segment.frames.push_back({std::move(f.observation), robot.pose(), t});
    last_capture_tick = tick;
    ++captures;
  };
  out.ground_truth.push_back({0.0, robot.pose()});
  capture(0.0);

  for (std::size_t w = 1; w < waypoints.size(); ++w) {
    const Vec2 target = waypoints[w];
    const bool final_wp = w + 1 == waypoints.size();
    const double tol = final_wp ? 0.05 : 0.3;
    const long start_tick = tick;
    while (true) {
      const Pose& p = robot.pose();
      const Vec2 rel = target - p.translation().head<2>();
      const double dist = rel.norm();
      if (dist < tol) break;
      if ((tick - start_tick) * dt > rates.waypoint_timeout) {
        throw UnreachableWaypoint("waypoint " + std::to_string(w) + " (" +
                                  format_double(target.x(), 6) + ", " + format_double(target.y(), 6) +
                                  ") not reached");
      }
      double bearing = std::atan2(rel.y(), rel.x()) - p.yaw();
      bearing = std::remainder(bearing, 2.0 * std::numbers::pi);
      const double omega = std::clamp(3.0 * bearing, -robot.max_angular, robot.max_angular);
      double v = 0.0;
      if (std::abs(bearing) < 0.5) {
        v = rates.max_speed * std::cos(bearing);
        if (final_wp) v = std::min(v, 1.5 * dist);
      }
      const Pose before = robot.pose();
      const StepResult res = robot.step(world, v, omega, dt);
      ++tick;
      const double t = double(tick) / rates.odom_hz;
      travelled += (res.gt_pose.translation() - before.translation()).norm();
      out.ground_truth.push_back({t, res.gt_pose});
      out.odometry.push_back({t, res.odom_delta});
      bool want = false;
      if (rates.frame_spacing > 0.0) {
        want = travelled >= captures * rates.frame_spacing;
      } else if (rates.camera_hz > 0.0) {
        want = t + 1e-9 >= captures / rates.camera_hz;
      }
      if (want) capture(t);
    }
  }
  if (last_capture_tick != tick) capture(double(tick) / rates.odom_hz);
  return out;
}

std::vector<Vec2> grid_route(const GridWorld& g, const Vec2& from, const Vec2& to) {
  const int sx = g.cell_x(from.x()), sy = g.cell_y(from.y());
  const int tx = g.cell_x(to.x()), ty = g.cell_y(to.y());
  if (g.occupied(sx, sy) || g.occupied(tx, ty)) {
    throw UnreachableWaypoint("grid_route: endpoint inside an obstacle");
  }
  const int n = g.width * g.height;
  auto idx = [&](int x, int y) { return y * g.width + x; };
  auto near_wall = [&](int x, int y) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (g.occupied(x + dx, y + dy)) return true;
    return false;
  };
  std::vector<double> dist(n, kInf);
  std::vector<int> parent(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[idx(sx, sy)] = 0.0;
  pq.push({0.0, idx(sx, sy)});
  while (!pq.empty()) {
    auto [d, c] = pq.top();
    pq.pop();
    if (d > dist[c]) continue;
    if (c == idx(tx, ty)) break;
    const int cx = c % g.width, cy = c / g.width;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cx + dx, ny = cy + dy;
        if (g.occupied(nx, ny)) continue;
        if (dx != 0 && dy != 0 && (g.occupied(cx + dx, cy) || g.occupied(cx, cy + dy))) continue;
        const double step = (dx != 0 && dy != 0) ? std::numbers::sqrt2 : 1.0;
        const double cost = d + step + (near_wall(nx, ny) ? 3.0 : 0.0);
        const int ni = idx(nx, ny);
        if (cost < dist[ni]) {
          dist[ni] = cost;
          parent[ni] = c;
          pq.push({cost, ni});
        }
      }
    }
  }
  if (!(dist[idx(tx, ty)] < kInf)) throw UnreachableWaypoint("grid_route: no free path");
  std::vector<int> cells;
  for (int c = idx(tx, ty); c != -1; c = parent[c]) cells.push_back(c);
  std::reverse(cells.begin(), cells.end());

  std::vector<Vec2> pts;
  pts.push_back(from);
  for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
    const int a = cells[i - 1], b = cells[i], c = cells[i + 1];
    const int d1x = b % g.width - a % g.width, d1y = b / g.width - a / g.width;
    const int d2x = c % g.width - b % g.width, d2y = c / g.width - b / g.width;
    if (d1x != d2x || d1y != d2y) pts.push_back(g.cell_center(b % g.width, b / g.width));
  }
  if ((to - pts.back()).norm() > 1e-12) pts.push_back(to);
  return pts;
}

}  // namespace vloc::sim
