#include "vloc/image.hpp"

#include "vloc/errors.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

namespace vloc {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
  }
  return v;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_floats(std::ofstream& out, std::span<const float> values) {
  for (float f : values) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(f));
    out.write(reinterpret_cast<const char*>(&le), 4);
  }
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot write");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw FormatError(path.string() + ": " + what + " at offset " + std::to_string(pos));
  };
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      fail("expected integer");
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) fail("integer too large");
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("not a binary PGM (P5)");
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w <= 0 || h <= 0) fail("non-positive size");
  if (maxval != 255) fail("only 8-bit PGM supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail("missing header terminator");
  }
  ++pos;
  const std::size_t n = std::size_t(w) * h;
  if (bytes.size() - pos != n) fail("pixel payload has wrong size");
  GrayImage img(w, h);
  std::memcpy(img.data.data(), bytes.data() + pos, n);
  return img;
}

void write_depth_f32(const std::filesystem::path& path, const DepthImage& depth) {
  std::vector<float> values(depth.data.begin(), depth.data.end());
  write_f32(path, values);
}

DepthImage read_depth_f32(const std::filesystem::path& path, int width, int height) {
  const std::vector<float> values = read_f32(path);
  if (values.size() != std::size_t(width) * height) {
    throw FormatError(path.string() + ": expected " + std::to_string(std::size_t(width) * height) +
                      " floats, found " + std::to_string(values.size()));
  }
  DepthImage out(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) out.data[i] = values[i];
  return out;
}

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot write");
  write_floats(out, values);
}

std::vector<float> read_f32(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  if (bytes.size() % 4 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of 4 (truncated at offset " +
                      std::to_string(bytes.size() - bytes.size() % 4) + ")");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes.data() + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_le(le));
  }
  return out;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t file_fnv1a(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  return fnv1a({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

}  // namespace vloc
