#pragma once

#include "vloc/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vloc {

/// Row-major image with value semantics.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(std::size_t(w) * h, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  T& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  const T& at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool operator==(const Image&) const = default;
};

using GrayImage = Image<std::uint8_t>;
/// Depth along the optical axis in meters; 0 marks a sensor hole.
using DepthImage = Image<double>;

/// A landmark seen in an image; only the simulator fills these.
struct LandmarkObservation {
  std::int64_t id = 0;
  Vec2 pixel = Vec2::Zero();
  /// Depth of the landmark along the optical axis, meters.
  double depth = 0.0;
};

/// One sensor snapshot Z_k = {I_k, D_k}.
struct Observation {
  GrayImage color;
  DepthImage depth;
  std::vector<LandmarkObservation> landmarks;

  bool has_depth() const { return !depth.empty(); }
};

/// Binary 8-bit PGM (P5).
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

/// Little-endian float32, row-major; the size comes from the caller.
void write_depth_f32(const std::filesystem::path& path, const DepthImage& depth);
DepthImage read_depth_f32(const std::filesystem::path& path, int width, int height);

/// Raw little-endian float32 blob helpers shared by descriptor files.
void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path);

/// FNV-1a over raw bytes; used for content fingerprints in tests and reports.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t file_fnv1a(const std::filesystem::path& path);

}  // namespace vloc
