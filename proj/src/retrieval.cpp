#include "vloc/retrieval.hpp"

#include "vloc/errors.hpp"
#include "vloc/mapgraph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace vloc {

namespace {

constexpr int kThumb = 32;     // working resolution
constexpr int kBlock = 8;      // intensity thumbnail side
constexpr int kCells = 4;      // histogram grid side
constexpr int kBins = 12;      // orientation bins over [0, 2pi)

void normalize_block(std::span<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 1e-12)
    for (double& x : v) x /= n;
}

}  // namespace

Descriptor extract_descriptor(const GrayImage& image) {
  if (image.empty()) throw EmptyImage("extract_descriptor: empty image");

  // Box-average onto a 32x32 grid; each source pixel lands in one cell.
  std::array<double, kThumb * kThumb> sum{}, count{};
  for (int y = 0; y < image.height; ++y) {
    const int cy = y * kThumb / image.height;
    for (int x = 0; x < image.width; ++x) {
      const int cx = x * kThumb / image.width;
      sum[cy * kThumb + cx] += image.at(x, y);
      count[cy * kThumb + cx] += 1.0;
    }
  }
  std::array<double, kThumb * kThumb> small{};
  for (int i = 0; i < kThumb * kThumb; ++i) small[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
  // Tiny images leave empty cells; fill them from the nearest filled cell to the left/top.
  for (int i = 0; i < kThumb * kThumb; ++i) {
    if (count[i] == 0 && i > 0) small[i] = small[i - 1];
  }

  std::array<double, kDescriptorDim> d{};
  const int f = kThumb / kBlock;
  double mean = 0.0;
  for (int by = 0; by < kBlock; ++by) {
    for (int bx = 0; bx < kBlock; ++bx) {
      double s = 0.0;
      for (int y = 0; y < f; ++y)
        for (int x = 0; x < f; ++x) s += small[(by * f + y) * kThumb + bx * f + x];
      d[by * kBlock + bx] = s / (f * f);
      mean += d[by * kBlock + bx];
    }
  }
  mean /= kBlock * kBlock;
  for (int i = 0; i < kBlock * kBlock; ++i) d[i] -= mean;

  double* hist = d.data() + kBlock * kBlock;
  const int cell = kThumb / kCells;
  for (int y = 1; y + 1 < kThumb; ++y) {
    for (int x = 1; x + 1 < kThumb; ++x) {
      const double gx = small[y * kThumb + x + 1] - small[y * kThumb + x - 1];
      const double gy = small[(y + 1) * kThumb + x] - small[(y - 1) * kThumb + x];
      const double mag = std::hypot(gx, gy);
      if (mag < 1e-9) continue;
      double a = std::atan2(gy, gx);
      if (a < 0) a += 2.0 * std::numbers::pi;
      // Linear vote into the two nearest bins.
      const double pos = a / (2.0 * std::numbers::pi) * kBins - 0.5;
      const int b0 = static_cast<int>(std::floor(pos));
      const double w1 = pos - b0;
      const int base = ((y / cell) * kCells + x / cell) * kBins;
      hist[base + (b0 + kBins) % kBins] += mag * (1.0 - w1);
      hist[base + (b0 + 1) % kBins] += mag * w1;
    }
  }

  normalize_block({d.data(), std::size_t(kBlock * kBlock)});
  normalize_block({hist, std::size_t(kCells * kCells * kBins)});
  double n = 0.0;
  for (double x : d) n += x * x;
  Descriptor out(kDescriptorDim, 0.0f);
  if (n < 1e-12) {
    out[0] = 1.0f;
    return out;
  }
  n = std::sqrt(n);
  for (int i = 0; i < kDescriptorDim; ++i) out[i] = static_cast<float>(d[i] / n);
  return out;
}

double similarity(const Descriptor& a, const Descriptor& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("similarity: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

RetrievalResult top_k(const Descriptor& query, const TopoMetricMap& map, std::size_t k) {
  if (map.nodes.empty()) throw EmptyMap("top_k: map has no nodes");
  RetrievalResult r;
  r.ranked.reserve(map.nodes.size());
  for (const MapNode& n : map.nodes) r.ranked.emplace_back(n.id, similarity(query, n.descriptor));
  std::sort(r.ranked.begin(), r.ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (r.ranked.size() > k) r.ranked.resize(k);
  return r;
}

IngestReport ingest_descriptors(const std::filesystem::path& file, TopoMetricMap& map) {
  const std::vector<float> values = read_f32(file);
  const std::size_t dim = static_cast<std::size_t>(map.descriptor_dim);
  if (values.size() != map.nodes.size() * dim) {
    throw DimensionMismatch(file.string() + ": expected " + std::to_string(map.nodes.size()) +
                            " x " + std::to_string(dim) + " floats, found " +
                            std::to_string(values.size()));
  }
  IngestReport report;
  std::vector<Descriptor> rows(map.nodes.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Descriptor row(values.begin() + i * dim, values.begin() + (i + 1) * dim);
    double n = 0.0;
    for (float x : row) n += double(x) * double(x);
    n = std::sqrt(n);
    if (std::abs(n - 1.0) > 1e-6) {
      if (!(std::abs(n - 1.0) <= 0.1)) {
        throw NonUnitNorm(file.string() + ": row " + std::to_string(i) + " has norm " +
                          format_double(n, 6));
      }
      for (float& x : row) x = static_cast<float>(x / n);
      ++report.renormalized;
      report.warnings.push_back("row " + std::to_string(i) + " norm " + format_double(n, 6) +
                                " renormalized");
    }
    rows[i] = std::move(row);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) map.nodes[i].descriptor = std::move(rows[i]);
  return report;
}

}  // namespace vloc
