#include "pixelflow/resample.hpp"

#include <stdexcept>
#include <string>

namespace pixelflow {

namespace {

Image halve(const Image& img) {
  Image out(img.channels, img.height / 2, img.width / 2);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        const double sum = img.at(c, 2 * y, 2 * x) + img.at(c, 2 * y, 2 * x + 1) +
                           img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = 0.25 * sum;
      }
    }
  }
  return out;
}

void require_factor(const char* op, std::size_t factor) {
  if (!is_power_of_two(factor)) {
    throw std::invalid_argument(std::string(op) + ": factor " + std::to_string(factor) +
                                " is not a power of two");
  }
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Image downsample(const Image& img, std::size_t factor) {
  require_factor("downsample", factor);
  if (img.height % factor != 0 || img.width % factor != 0) {
    throw std::invalid_argument("downsample: " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " image not divisible by factor " +
                                std::to_string(factor));
  }
  Image out = img;
  for (std::size_t f = factor; f > 1; f /= 2) out = halve(out);
  return out;
}

Image upsample(const Image& img, std::size_t factor) {
  require_factor("upsample", factor);
  if (factor == 1) return img;
  Image out(img.channels, img.height * factor, img.width * factor);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        out.at(c, y, x) = img.at(c, y / factor, x / factor);
      }
    }
  }
  return out;
}

}  // namespace pixelflow
