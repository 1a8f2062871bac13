#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixelflow/image.hpp"

namespace pixelflow {

enum class DataErrorKind { io, bad_magic, bad_version, truncated, invalid };

std::string_view to_string(DataErrorKind kind);

/// Persistence failure. `kind()` distinguishes I/O problems, foreign files,
/// unsupported versions, short files and inconsistent contents.
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& what);
  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

struct Dataset {
  std::size_t channels = 3;
  std::size_t resolution = 0;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  /// Labels in range, pixels in [-1, 1], shapes consistent.
  void validate() const;
};

inline constexpr std::size_t kMaxShapeClasses = 16;

/// Procedural class-conditional dataset. Class k is the pair
/// (shape k % 4, hue k / 4) over {circle, square, triangle, cross} and four
/// base hues; image i has label i % num_classes and a random position,
/// scale, rotation and background shade drawn from a stream derived from
/// (seed, i). Pixel values are float32-representable.
Dataset gen_shapes_dataset(std::size_t n, std::size_t resolution, std::size_t num_classes,
                           std::uint64_t seed);

/// PXFD v1, little-endian: "PXFD", u32 version, u32 n, u32 channels,
/// u32 height, u32 width, u32 num_classes, u64 seed, f32 pixels (n*C*H*W),
/// u16 labels (n), u32 string count, then u32-length-prefixed class names.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// Binary PPM (P6). Values map from [-1, 1] to bytes by
/// floor((v + 1) / 2 * 255 + 0.5) with clamping.
std::string encode_ppm(const Image& img);
void write_ppm(const Image& img, const std::filesystem::path& path);
std::uint8_t quantize_pixel(double v);

}  // namespace pixelflow
