#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace pixelflow {

class Rng;

/// Channel-major (C, H, W) float64 image. Real data lives in [-1, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), values(c * h * w, fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t index(std::size_t c, std::size_t y, std::size_t x) const {
    return (c * height + y) * width + x;
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[index(c, y, x)]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[index(c, y, x)]; }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Throws ShapeError naming `op` unless the two images have equal shapes.
void require_same_shape(std::string_view op, const Image& a, const Image& b);

/// a * x + b * y
Image lincomb(double a, const Image& x, double b, const Image& y);

/// i.i.d. standard normal image.
Image gaussian_image(std::size_t c, std::size_t h, std::size_t w, Rng& rng);

/// Clamps every value into [lo, hi].
Image clamp(Image img, double lo, double hi);

}  // namespace pixelflow
