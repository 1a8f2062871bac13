#pragma once

#include <cstddef>
#include <span>

#include "pixelflow/tensor.hpp"

namespace pixelflow {

/// Token position on its image's patch grid.
struct GridPosition {
  double row = 0.0;
  double col = 0.0;
};

inline constexpr double kRopeBase = 10000.0;

/// Rotates one attention head in place. The first half of the head is
/// rotated by row-position angles and the second half by column-position
/// angles; inside each half, element pairs (2i, 2i+1) turn by
/// pos * base^(-2i / half). `head.size()` must be divisible by 4.
void apply_rope_2d(std::span<double> head, GridPosition pos, double base = kRopeBase);

/// Applies `apply_rope_2d` to every head of every row of x [n, heads * head_dim]
/// on the tape; row i uses positions[i].
Tensor rope_2d(const Tensor& x, std::span<const GridPosition> positions, std::size_t heads,
               double base = kRopeBase);

}  // namespace pixelflow
