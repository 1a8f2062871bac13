#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pixelflow/flow.hpp"
#include "pixelflow/image.hpp"
#include "pixelflow/rope.hpp"
#include "pixelflow/tensor.hpp"

namespace pixelflow {

/// Raw (unprojected) patch tokens of one image: [grid_h * grid_w, p * p * C],
/// row-major over the grid, each token laid out as (py, px, c).
struct TokenGrid {
  Tensor tokens;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

TokenGrid patchify(const Image& img, std::size_t patch_size);

/// Inverse of `patchify`. `tokens` is [(res/p)^2, p * p * C].
Image unpatchify(std::span<const double> tokens, std::size_t patch_size, std::size_t channels,
                 std::size_t resolution);
Image unpatchify(const Tensor& tokens, std::size_t patch_size, std::size_t resolution);

struct SequenceSpec {
  TokenGrid grid;
  double t = 0.0;
  ClassLabel label;
};

struct SequenceInfo {
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  double t = 0.0;
  ClassLabel label;
  /// Token-grid extent fed to the resolution embedding.
  std::size_t resolution = 0;
};

/// Token sequences of different lengths concatenated along the sequence
/// axis. Attention is block-diagonal: token i may attend to token j only when
/// both belong to the same sequence.
struct PackedBatch {
  Tensor tokens;
  std::vector<SequenceInfo> sequences;
  /// Sequence boundaries, size sequences.size() + 1.
  std::vector<std::size_t> offsets;
  /// Owning sequence of every token.
  std::vector<std::size_t> token_sequence;
  std::vector<GridPosition> positions;

  std::size_t total_tokens() const { return token_sequence.size(); }
  bool attends(std::size_t i, std::size_t j) const {
    return token_sequence.at(i) == token_sequence.at(j);
  }
  /// Row-major [total, total] mask, 1 where attention is allowed.
  std::vector<std::uint8_t> dense_mask() const;
  /// Rows [offset, offset + length) of a per-token tensor for sequence `i`.
  Tensor sequence_rows(const Tensor& per_token, std::size_t i) const;
};

PackedBatch pack(std::span<const SequenceSpec> sequences);

}  // namespace pixelflow
