#pragma once

#include "vloc/image.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace vloc {

struct TopoMetricMap;

constexpr int kDescriptorDim = 256;

/// Unit-norm global image descriptor. Stored as float32 so that map files
/// round-trip bit for bit.
using Descriptor = std::vector<float>;

/// Built-in hand-crafted descriptor: a mean-subtracted 8x8 intensity
/// thumbnail (64 values) followed by a 4x4 grid of 12-bin gradient
/// orientation histograms (192 values), each block unit-normalized, then
/// the whole vector L2-normalized. A featureless image yields e0.
/// Throws EmptyImage.
Descriptor extract_descriptor(const GrayImage& image);

/// Cosine similarity of unit descriptors, accumulated in double. Symmetric
/// bit for bit. Throws DimensionMismatch.
double similarity(const Descriptor& a, const Descriptor& b);

struct RetrievalResult {
  /// (node id, similarity), descending by similarity, ties by ascending id.
  std::vector<std::pair<int, double>> ranked;
};

/// Exhaustive retrieval over every node. Throws EmptyMap.
RetrievalResult top_k(const Descriptor& query, const TopoMetricMap& map, std::size_t k);

struct IngestReport {
  std::size_t renormalized = 0;
  std::vector<std::string> warnings;
};

/// Replaces all node descriptors with the rows of a descriptors.f32 file.
/// Rows whose norm is off by at most 10% are renormalized with a warning;
/// anything further off throws NonUnitNorm. A wrong element count throws
/// DimensionMismatch.
IngestReport ingest_descriptors(const std::filesystem::path& file, TopoMetricMap& map);

}  // namespace vloc
