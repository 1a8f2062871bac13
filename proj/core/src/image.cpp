#include "pixelflow/image.hpp"

#include <algorithm>
#include <string>

#include "pixelflow/rng.hpp"
#include "pixelflow/tensor.hpp"

namespace pixelflow {

void require_same_shape(std::string_view op, const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(op, Shape{a.channels, a.height, a.width}, Shape{b.channels, b.height, b.width});
  }
}

Image lincomb(double a, const Image& x, double b, const Image& y) {
  require_same_shape("lincomb", x, y);
  Image out(x.channels, x.height, x.width);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a * x.values[i] + b * y.values[i];
  return out;
}

Image gaussian_image(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  Image img(c, h, w);
  for (auto& v : img.values) v = rng.normal();
  return img;
}

Image clamp(Image img, double lo, double hi) {
  for (auto& v : img.values) v = std::clamp(v, lo, hi);
  return img;
}

}  // namespace pixelflow
