#include "pixelflow/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "binio.hpp"
#include "pixelflow/rng.hpp"

namespace pixelflow {

namespace {

constexpr std::string_view kDatasetMagic = "PXFD";
constexpr std::uint32_t kDatasetVersion = 1;
constexpr int kSupersample = 4;

enum class ShapeKind { circle, square, triangle, cross };

constexpr std::array<const char*, 4> kShapeNames{"circle", "square", "triangle", "cross"};
constexpr std::array<const char*, 4> kHueNames{"red", "blue", "green", "yellow"};
// Base colours in [-1, 1].
constexpr std::array<std::array<double, 3>, 4> kHues{{
    {0.9, -0.6, -0.6},
    {-0.6, -0.3, 0.9},
    {-0.5, 0.8, -0.5},
    {0.9, 0.8, -0.7},
}};

bool inside(ShapeKind kind, double u, double v) {
  constexpr double sqrt3 = 1.7320508075688772;
  switch (kind) {
    case ShapeKind::circle:
      return u * u + v * v <= 1.0;
    case ShapeKind::square:
      return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case ShapeKind::triangle:
      return v <= 0.5 && sqrt3 * u - v <= 1.0 && -sqrt3 * u - v <= 1.0;
    case ShapeKind::cross:
      return (std::abs(u) <= 0.3 && std::abs(v) <= 0.9) ||
             (std::abs(v) <= 0.3 && std::abs(u) <= 0.9);
  }
  return false;
}

Image render(std::size_t label, std::size_t resolution, Rng& rng) {
  const auto kind = static_cast<ShapeKind>(label % 4);
  const auto& hue = kHues[label / 4];
  const double res = static_cast<double>(resolution);
  const double cx = (0.3 + 0.4 * rng.uniform()) * res;
  const double cy = (0.3 + 0.4 * rng.uniform()) * res;
  const double radius = (0.18 + 0.14 * rng.uniform()) * res;
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const double background = -0.9 + 0.6 * rng.uniform();
  const double brightness = 0.85 + 0.15 * rng.uniform();
  const double ca = std::cos(angle), sa = std::sin(angle);

  Image img(3, resolution, resolution);
  for (std::size_t y = 0; y < resolution; ++y) {
    for (std::size_t x = 0; x < resolution; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSupersample - cx;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSupersample - cy;
          const double u = (ca * px + sa * py) / radius;
          const double v = (-sa * px + ca * py) / radius;
          hits += inside(kind, u, v) ? 1 : 0;
        }
      }
      const double alpha = static_cast<double>(hits) / (kSupersample * kSupersample);
      for (std::size_t c = 0; c < 3; ++c) {
        const double value = (1.0 - alpha) * background + alpha * brightness * hue[c];
        img.at(c, y, x) = static_cast<float>(std::clamp(value, -1.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

std::string_view to_string(DataErrorKind kind) {
  switch (kind) {
    case DataErrorKind::io: return "io";
    case DataErrorKind::bad_magic: return "bad_magic";
    case DataErrorKind::bad_version: return "bad_version";
    case DataErrorKind::truncated: return "truncated";
    case DataErrorKind::invalid: return "invalid";
  }
  return "unknown";
}

DataError::DataError(DataErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

void Dataset::validate() const {
  auto fail = [](const std::string& what) { throw DataError(DataErrorKind::invalid, "dataset: " + what); };
  if (labels.size() != images.size()) fail("label count does not match image count");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.channels != channels || img.height != resolution || img.width != resolution) {
      fail("image " + std::to_string(i) + " has the wrong shape");
    }
    if (labels[i] >= num_classes) fail("label of image " + std::to_string(i) + " out of range");
    for (double v : img.values) {
      if (!(v >= -1.0 && v <= 1.0)) fail("image " + std::to_string(i) + " has values outside [-1, 1]");
    }
  }
}

Dataset gen_shapes_dataset(std::size_t n, std::size_t resolution, std::size_t num_classes,
                           std::uint64_t seed) {
  if (resolution != 16 && resolution != 32 && resolution != 64) {
    throw std::invalid_argument("gen_shapes_dataset: resolution " + std::to_string(resolution) +
                                " unsupported (use 16, 32 or 64)");
  }
  if (num_classes == 0 || num_classes > kMaxShapeClasses) {
    throw std::invalid_argument("gen_shapes_dataset: num_classes must be in [1, 16]");
  }
  Dataset ds;
  ds.channels = 3;
  ds.resolution = resolution;
  ds.num_classes = num_classes;
  ds.seed = seed;
  for (std::size_t k = 0; k < num_classes; ++k) {
    ds.class_names.push_back(std::string(kHueNames[k / 4]) + " " + kShapeNames[k % 4]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, i);
    const std::size_t label = i % num_classes;
    ds.images.push_back(render(label, resolution, rng));
    ds.labels.push_back(label);
  }
  return ds;
}

namespace detail {

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, std::string(what) + ": cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError(DataErrorKind::io, std::string(what) + ": read failed for " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes, const char* what) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, std::string(what) + ": cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(DataErrorKind::io, std::string(what) + ": write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError(DataErrorKind::io, std::string(what) + ": cannot move into place " + path.string());
}

}  // namespace detail

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  dataset.validate();
  detail::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.size()));
  w.u32(static_cast<std::uint32_t>(dataset.channels));
  w.u32(static_cast<std::uint32_t>(dataset.resolution));
  w.u32(static_cast<std::uint32_t>(dataset.resolution));
  w.u32(static_cast<std::uint32_t>(dataset.num_classes));
  w.u64(dataset.seed);
  for (const auto& img : dataset.images) {
    for (double v : img.values) w.f32(static_cast<float>(v));
  }
  for (auto label : dataset.labels) w.u16(static_cast<std::uint16_t>(label));
  w.u32(static_cast<std::uint32_t>(dataset.class_names.size()));
  for (const auto& name : dataset.class_names) w.str(name);
  detail::write_file(path, w.buffer(), "save_dataset");
}

Dataset load_dataset(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path, "load_dataset");
  detail::ByteReader r(bytes, "load_dataset");
  if (bytes.size() < kDatasetMagic.size() || r.bytes(kDatasetMagic.size()) != kDatasetMagic) {
    throw DataError(DataErrorKind::bad_magic, "load_dataset: " + path.string() + " is not a PXFD file");
  }
  if (const auto version = r.u32(); version != kDatasetVersion) {
    throw DataError(DataErrorKind::bad_version,
                    "load_dataset: unsupported PXFD version " + std::to_string(version));
  }
  Dataset ds;
  const auto n = r.u32();
  ds.channels = r.u32();
  const auto height = r.u32();
  const auto width = r.u32();
  if (height != width) throw DataError(DataErrorKind::invalid, "load_dataset: non-square images");
  ds.resolution = height;
  ds.num_classes = r.u32();
  ds.seed = r.u64();
  const std::size_t per_image = ds.channels * ds.resolution * ds.resolution;
  r.need(std::size_t{n} * per_image, 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    Image img(ds.channels, ds.resolution, ds.resolution);
    for (auto& v : img.values) v = r.f32();
    ds.images.push_back(std::move(img));
  }
  r.need(n, 2);
  for (std::uint32_t i = 0; i < n; ++i) ds.labels.push_back(r.u16());
  const auto names = r.u32();
  for (std::uint32_t i = 0; i < names; ++i) ds.class_names.push_back(r.str());
  if (!r.at_end()) throw DataError(DataErrorKind::invalid, "load_dataset: trailing bytes after payload");
  ds.validate();
  return ds;
}

std::uint8_t quantize_pixel(double v) {
  if (std::isnan(v)) return 0;
  const double scaled = std::floor((v + 1.0) / 2.0 * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::string encode_ppm(const Image& img) {
  if (img.channels != 3) {
    throw std::invalid_argument("write_ppm: expected 3 channels, got " + std::to_string(img.channels));
  }
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + 3 * img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(quantize_pixel(img.at(c, y, x))));
    }
  }
  return out;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  detail::write_file(path, encode_ppm(img), "write_ppm");
}

}  // namespace pixelflow
