#pragma once

#include <cstddef>

#include "pixelflow/image.hpp"

namespace pixelflow {

/// Bilinear downsampling with half-pixel centers, applied as repeated
/// factor-2 reductions. Under that convention each reduction samples the
/// exact midpoint of a 2x2 block, so it equals 2x2 mean pooling.
/// `factor` must be a power of two dividing both image dimensions.
Image downsample(const Image& img, std::size_t factor);

/// Nearest-neighbour upsampling: every pixel becomes a factor x factor block.
Image upsample(const Image& img, std::size_t factor);

bool is_power_of_two(std::size_t n);

}  // namespace pixelflow
