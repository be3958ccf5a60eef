#include "vloc/errors.hpp"
#include "vloc/mapgraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace vloc {

namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

std::string where(const fs::path& file, int line) {
  return file.string() + ":" + std::to_string(line) + ": ";
}

/// Splits a CSV row into doubles, requiring exactly `n` fields.
std::vector<double> parse_row(const fs::path& file, int lineno, std::string line, std::size_t n) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<double> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(where(file, lineno) + "bad number '" + field + "'");
    }
  }
  if (out.size() != n) {
    throw FormatError(where(file, lineno) + "expected " + std::to_string(n) + " fields, found " +
                      std::to_string(out.size()));
  }
  return out;
}

int as_id(const fs::path& file, int lineno, double v) {
  if (v != std::floor(v) || v < 0 || v > 1e9) {
    throw FormatError(where(file, lineno) + "bad node id");
  }
  return static_cast<int>(v);
}

template <typename F>
void read_csv(const fs::path& file, const std::string& header, F&& row) {
  std::ifstream in(file);
  if (!in) throw FormatError(file.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(where(file, 1) + "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw FormatError(where(file, 1) + "expected header '" + header + "'");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    row(lineno, line);
  }
}


}  // namespace

StorageReport save_map(const TopoMetricMap& map, const fs::path& dir) {
  map.validate();
  fs::create_directories(dir);
  StorageReport report;

  {
    std::ofstream out(dir / "nodes.csv");
    if (!out) throw FormatError((dir / "nodes.csv").string() + ": cannot write");
    out << "id,x,y,z,qw,qx,qy,qz\n";
    for (const MapNode& n : map.nodes) {
      std::string p = format_pose(n.pose);
      std::replace(p.begin(), p.end(), ' ', ',');
      out << n.id << ',' << p << '\n';
    }
  }
  {
    std::ofstream out(dir / "cng_edges.csv");
    out << "id_a,id_b,weight\n";
    for (const CngEdge& e : map.cng_edges) out << e.a << ',' << e.b << ',' << format_double(e.weight) << '\n';
  }
  {
    std::ofstream out(dir / "cvg_edges.csv");
    out << "id_a,id_b,n_corr\n";
    for (const CvgEdge& e : map.cvg_edges) out << e.a << ',' << e.b << ',' << e.count << '\n';
  }
  std::vector<float> desc;
  desc.reserve(map.nodes.size() * map.descriptor_dim);
  for (const MapNode& n : map.nodes) desc.insert(desc.end(), n.descriptor.begin(), n.descriptor.end());
  write_f32(dir / "descriptors.f32", desc);
  report.descriptors = fs::file_size(dir / "descriptors.f32");

  // Stale files from an earlier save would otherwise be picked up on load.
  fs::remove_all(dir / "images");
  fs::remove_all(dir / "depth");
  for (const MapNode& n : map.nodes) {
    if (n.image) {
      fs::create_directories(dir / "images");
      const fs::path p = dir / "images" / (std::to_string(n.id) + ".pgm");
      write_pgm(p, *n.image);
      report.images += fs::file_size(p);
    }
    if (n.depth) {
      fs::create_directories(dir / "depth");
      const fs::path p = dir / "depth" / (std::to_string(n.id) + ".f32");
      write_depth_f32(p, *n.depth);
      report.images += fs::file_size(p);
    }
  }
  report.manifests = fs::file_size(dir / "nodes.csv") + fs::file_size(dir / "cng_edges.csv") +
                     fs::file_size(dir / "cvg_edges.csv");

  std::ofstream out(dir / "manifest.txt");
  if (!out) throw FormatError((dir / "manifest.txt").string() + ": cannot write");
  out << "version=" << kFormatVersion << '\n'
      << "node_count=" << map.nodes.size() << '\n'
      << "descriptor_dim=" << map.descriptor_dim << '\n'
      << "grid_res=" << format_double(map.grid_res) << '\n';
  if (map.intrinsics) {
    const CameraIntrinsics& K = *map.intrinsics;
    out << "intrinsics=" << format_double(K.fx) << ' ' << format_double(K.fy) << ' '
        << format_double(K.cx) << ' ' << format_double(K.cy) << ' ' << K.width << ' ' << K.height
        << '\n';
  }
  out << "storage_bytes_descriptors=" << report.descriptors << '\n'
      << "storage_bytes_images=" << report.images << '\n'
      << "storage_bytes_metadata=" << report.manifests << '\n';
  return report;
}

TopoMetricMap load_map(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) throw FormatError(manifest.string() + ": cannot open");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where(manifest, lineno) + "expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(manifest.string() + ": missing key '" + key + "'");
    return it->second;
  };
  if (get("version") != std::to_string(kFormatVersion)) {
    throw VersionMismatch(manifest.string() + ": unsupported format version '" + get("version") + "'");
  }

  TopoMetricMap map;
  std::size_t node_count = 0;
  try {
    node_count = std::stoul(get("node_count"));
    map.descriptor_dim = std::stoi(get("descriptor_dim"));
    map.grid_res = std::stod(get("grid_res"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception&) {
    throw FormatError(manifest.string() + ": malformed numeric value");
  }
  if (kv.count("intrinsics")) {
    std::istringstream ks(kv["intrinsics"]);
    CameraIntrinsics K;
    if (!(ks >> K.fx >> K.fy >> K.cx >> K.cy >> K.width >> K.height)) {
      throw FormatError(manifest.string() + ": malformed intrinsics");
    }
    map.intrinsics = K;
  }

  const fs::path nodes_csv = dir / "nodes.csv";
  read_csv(nodes_csv, "id,x,y,z,qw,qx,qy,qz", [&](int ln, const std::string& row) {
    const auto v = parse_row(nodes_csv, ln, row, 8);
    MapNode n;
    n.id = as_id(nodes_csv, ln, v[0]);
    if (n.id != static_cast<int>(map.nodes.size())) {
      throw FormatError(where(nodes_csv, ln) + "node ids must be dense and ordered");
    }
    n.pose = Pose(Vec3(v[1], v[2], v[3]), Quat(v[4], v[5], v[6], v[7]));
    map.nodes.push_back(std::move(n));
  });
  if (map.nodes.size() != node_count) {
    throw FormatError(nodes_csv.string() + ": " + std::to_string(map.nodes.size()) +
                      " nodes but manifest says " + std::to_string(node_count));
  }

  const fs::path desc_file = dir / "descriptors.f32";
  const std::vector<float> desc = read_f32(desc_file);
  const std::size_t dim = static_cast<std::size_t>(map.descriptor_dim);
  if (desc.size() != node_count * dim) {
    throw FormatError(desc_file.string() + ": expected " + std::to_string(node_count * dim) +
                      " floats, found " + std::to_string(desc.size()) + " (truncated or wrong dimension)");
  }
  for (std::size_t i = 0; i < node_count; ++i) {
    map.nodes[i].descriptor.assign(desc.begin() + i * dim, desc.begin() + (i + 1) * dim);
  }

  for (MapNode& n : map.nodes) {
    const fs::path img = dir / "images" / (std::to_string(n.id) + ".pgm");
    const fs::path dep = dir / "depth" / (std::to_string(n.id) + ".f32");
    if (fs::exists(img)) n.image = read_pgm(img);
    if (fs::exists(dep)) {
      int w = 0, h = 0;
      if (n.image) {
        w = n.image->width;
        h = n.image->height;
      } else if (map.intrinsics) {
        w = map.intrinsics->width;
        h = map.intrinsics->height;
      } else {
        throw FormatError(dep.string() + ": depth without image or intrinsics has unknown size");
      }
      n.depth = read_depth_f32(dep, w, h);
    }
  }

  const int n = static_cast<int>(node_count);
  auto endpoints = [&](const fs::path& file, int ln, double a, double b) {
    const int ia = as_id(file, ln, a), ib = as_id(file, ln, b);
    if (!(ia < ib) || ib >= n) throw FormatError(where(file, ln) + "edge endpoints invalid");
    return std::pair{ia, ib};
  };
  const fs::path cng = dir / "cng_edges.csv";
  read_csv(cng, "id_a,id_b,weight", [&](int ln, const std::string& row) {
    const auto v = parse_row(cng, ln, row, 3);
    const auto [a, b] = endpoints(cng, ln, v[0], v[1]);
    map.cng_edges.push_back({a, b, v[2]});
  });
  const fs::path cvg = dir / "cvg_edges.csv";
  read_csv(cvg, "id_a,id_b,n_corr", [&](int ln, const std::string& row) {
    const auto v = parse_row(cvg, ln, row, 3);
    const auto [a, b] = endpoints(cvg, ln, v[0], v[1]);
    map.cvg_edges.push_back({a, b, static_cast<int>(v[2])});
  });
  return map;
}

}  // namespace vloc
