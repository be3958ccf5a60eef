#include "vloc/matching.hpp"

#include "vloc/errors.hpp"
#include "vloc/random.hpp"
#include "vloc/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace vloc {

std::vector<Feature> detect_features(const GrayImage& img, const ClassicalParams& p) {
  const int w = img.width, h = img.height;
  std::vector<Feature> out;
  if (img.empty()) return out;

  std::vector<double> ixx(std::size_t(w) * h, 0.0), iyy(ixx.size(), 0.0), ixy(ixx.size(), 0.0);
  auto I = [&](int x, int y) { return double(img.at(x, y)); };
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = (I(x + 1, y - 1) + 2 * I(x + 1, y) + I(x + 1, y + 1)) -
                        (I(x - 1, y - 1) + 2 * I(x - 1, y) + I(x - 1, y + 1));
      const double gy = (I(x - 1, y + 1) + 2 * I(x, y + 1) + I(x + 1, y + 1)) -
                        (I(x - 1, y - 1) + 2 * I(x, y - 1) + I(x + 1, y - 1));
      const std::size_t i = std::size_t(y) * w + x;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }

  // 5x5 box window for the structure tensor.
  const int margin = std::max(p.patch_radius, 3);
  std::vector<double> R(ixx.size(), 0.0);
  double rmax = 0.0;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      double a = 0, b = 0, c = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const std::size_t i = std::size_t(y + dy) * w + x + dx;
          a += ixx[i];
          b += iyy[i];
          c += ixy[i];
        }
      }
      const double r = a * b - c * c - p.harris_k * (a + b) * (a + b);
      R[std::size_t(y) * w + x] = r;
      rmax = std::max(rmax, r);
    }
  }
  if (rmax <= 0.0) return out;

  struct Cand {
    double r;
    int x, y;
  };
  std::vector<Cand> cands;
  const int nr = p.nms_radius;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double r = R[std::size_t(y) * w + x];
      if (r <= p.min_response * rmax) continue;
      bool is_max = true;
      for (int dy = -nr; dy <= nr && is_max; ++dy) {
        for (int dx = -nr; dx <= nr && is_max; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double o = R[std::size_t(yy) * w + xx];
          // Plateaus keep the first pixel in row-major order.
          if (o > r || (o == r && (yy < y || (yy == y && xx < x)))) is_max = false;
        }
      }
      if (is_max) cands.push_back({r, x, y});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.r > b.r; });

  const int pr = p.patch_radius;
  const int side = 2 * pr + 1;
  for (const Cand& c : cands) {
    if (static_cast<int>(out.size()) >= p.max_corners) break;
    std::vector<double> patch;
    patch.reserve(std::size_t(side) * side);
    double mean = 0.0;
    for (int dy = -pr; dy <= pr; ++dy)
      for (int dx = -pr; dx <= pr; ++dx) {
        patch.push_back(I(c.x + dx, c.y + dy));
        mean += patch.back();
      }
    mean /= double(patch.size());
    double n = 0.0;
    for (double& v : patch) {
      v -= mean;
      n += v * v;
    }
    if (n < 1e-9) continue;
    n = std::sqrt(n);
    Feature f;
    f.pixel = Vec2(c.x, c.y);
    f.response = c.r;
    f.patch.resize(patch.size());
    for (std::size_t i = 0; i < patch.size(); ++i) f.patch[i] = static_cast<float>(patch[i] / n);
    out.push_back(std::move(f));
  }
  return out;
}

namespace {

double patch_dist2(const Feature& a, const Feature& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.patch.size(); ++i) {
    const double d = double(a.patch[i]) - double(b.patch[i]);
    s += d * d;
  }
  return s;
}

}  // namespace

MatchSet match_features(const std::vector<Feature>& ref, const std::vector<Feature>& query,
                        const ClassicalParams& p) {
  MatchSet m;
  if (ref.empty() || query.empty()) return m;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t nr = ref.size(), nq = query.size();
  std::vector<double> dist(nr * nq);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < nr; ++j) dist[i * nr + j] = patch_dist2(query[i], ref[j]);

  std::vector<std::size_t> ref_best(nr, 0);
  for (std::size_t j = 0; j < nr; ++j) {
    double best = kInf;
    for (std::size_t i = 0; i < nq; ++i) {
      if (dist[i * nr + j] < best) {
        best = dist[i * nr + j];
        ref_best[j] = i;
      }
    }
  }
  for (std::size_t i = 0; i < nq; ++i) {
    double d1 = kInf, d2 = kInf;
    std::size_t j1 = 0;
    for (std::size_t j = 0; j < nr; ++j) {
      const double d = dist[i * nr + j];
      if (d < d1) {
        d2 = d1;
        d1 = d;
        j1 = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (ref_best[j1] != i) continue;
    if (!(std::sqrt(d1) < p.ratio * std::sqrt(d2))) continue;
    m.correspondences.push_back(
        {ref[j1].pixel, query[i].pixel, std::clamp(1.0 - d1 / 2.0, 0.0, 1.0)});
  }
  return m;
}

MatchSet match_classical(const GrayImage& ref, const GrayImage& query, const ClassicalParams& p) {
  return match_features(detect_features(ref, p), detect_features(query, p), p);
}

MatchSet match_oracle(const std::vector<LandmarkObservation>& ref,
                      const std::vector<LandmarkObservation>& query, const CameraIntrinsics& K,
                      const OracleParams& p) {
  if (!(p.outlier_rate >= 0.0 && p.outlier_rate < 1.0)) {
    throw std::invalid_argument("match_oracle: outlier_rate must lie in [0, 1)");
  }
  std::map<std::int64_t, const LandmarkObservation*> by_id;
  for (const auto& r : ref) by_id.emplace(r.id, &r);

  MatchSet m;
  Rng rng(p.seed);
  const double umax = std::nextafter(double(K.width), 0.0);
  const double vmax = std::nextafter(double(K.height), 0.0);
  auto clamp_px = [&](Vec2 uv) {
    return Vec2(std::clamp(uv.x(), 0.0, umax), std::clamp(uv.y(), 0.0, vmax));
  };
  for (const auto& q : query) {
    const auto it = by_id.find(q.id);
    if (it == by_id.end()) continue;
    Vec2 uq = q.pixel, ur = it->second->pixel;
    if (p.noise_px > 0.0) {
      uq = clamp_px(uq + Vec2(rng.normal(), rng.normal()) * p.noise_px);
      ur = clamp_px(ur + Vec2(rng.normal(), rng.normal()) * p.noise_px);
    }
    m.correspondences.push_back({ur, uq, 1.0});
  }

  const std::size_t n = m.size();
  const auto n_out = static_cast<std::size_t>(std::floor(p.outlier_rate * double(n)));
  if (n_out > 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    for (std::size_t k = 0; k < n_out; ++k) {
      Correspondence& c = m.correspondences[order[k]];
      c.uv_query = Vec2(rng.uniform(0.0, K.width), rng.uniform(0.0, K.height));
    }
  }
  return m;
}

void write_matches(const std::filesystem::path& path, const MatchSet& m) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "u_ref,v_ref,u_query,v_query,confidence\n";
  for (const auto& c : m.correspondences) {
    out << format_double(c.uv_ref.x(), 9) << ',' << format_double(c.uv_ref.y(), 9) << ','
        << format_double(c.uv_query.x(), 9) << ',' << format_double(c.uv_query.y(), 9) << ','
        << format_double(c.confidence, 9) << '\n';
  }
}

MatchSet ingest_matches(const std::filesystem::path& path, const CameraIntrinsics& K,
                        double min_conf) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "u_ref,v_ref,u_query,v_query,confidence") {
    throw FormatError(path.string() + ":1: unexpected header '" + line + "'");
  }
  MatchSet m;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double v[5];
    for (double& x : v) {
      if (!(ls >> x)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad row");
    }
    std::string extra;
    if (ls >> extra) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": trailing data");
    }
    Correspondence c{{v[0], v[1]}, {v[2], v[3]}, v[4]};
    if (!K.contains(c.uv_ref) || !K.contains(c.uv_query)) {
      throw OutOfBounds(path.string() + ": row " + std::to_string(lineno - 1) +
                        " has a pixel outside the " + std::to_string(K.width) + "x" +
                        std::to_string(K.height) + " image");
    }
    if (!std::isfinite(c.confidence)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-finite confidence");
    }
    if (c.confidence >= min_conf) m.correspondences.push_back(c);
  }
  return m;
}

const std::vector<Feature>& ClassicalMatcher::features(const GrayImage& img) const {
  const std::uint64_t key =
      hash_combine(fnv1a(img.data), (std::uint64_t(img.width) << 32) | std::uint32_t(img.height));
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, detect_features(img, params_)).first;
  return it->second;
}

MatchSet ClassicalMatcher::match(const MapNode& ref, const Observation& query) const {
  MatchSet m;
  if (ref.image && !ref.image->empty() && !query.color.empty()) {
    m = match_features(features(*ref.image), features(query.color), params_);
  }
  m.reference_node_id = ref.id;
  return m;
}

OracleMatcher::OracleMatcher(const sim::SimWorld* world, CameraIntrinsics K, OracleParams p)
    : world_(world), K_(K), params_(p) {}

MatchSet OracleMatcher::match(const MapNode& ref, const Observation& query) const {
  const std::vector<LandmarkObservation>* ref_lm = &ref.landmarks;
  if (ref_lm->empty() && world_ != nullptr) {
    // Cache by node id and pose so that nodes of different maps never alias.
    const std::uint64_t key = hash_combine(std::uint64_t(ref.id),
                                           std::hash<std::string>{}(format_pose(ref.pose)));
    auto it = rendered_.find(key);
    if (it == rendered_.end()) {
      it = rendered_.emplace(key, world_->render(ref.pose, K_).observation.landmarks).first;
    }
    ref_lm = &it->second;
  }
  OracleParams p = params_;
  // Per-call stream: reproducible for the same (node, query) pair.
  std::uint64_t h = hash_combine(params_.seed, std::uint64_t(ref.id));
  for (const auto& q : query.landmarks) h = hash_combine(h, std::uint64_t(q.id));
  if (!query.color.empty()) h = hash_combine(h, fnv1a(query.color.data));
  p.seed = h;
  MatchSet m = match_oracle(*ref_lm, query.landmarks, K_, p);
  m.reference_node_id = ref.id;
  return m;
}

}  // namespace vloc
