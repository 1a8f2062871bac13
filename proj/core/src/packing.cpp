#include "pixelflow/packing.hpp"

#include <stdexcept>
#include <string>

#include "pixelflow/ops.hpp"

namespace pixelflow {

TokenGrid patchify(const Image& img, std::size_t patch_size) {
  const auto p = patch_size;
  if (p == 0 || img.height % p != 0 || img.width % p != 0) {
    throw ShapeError("patchify: " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " image not divisible by patch size " + std::to_string(p));
  }
  TokenGrid grid;
  grid.grid_h = img.height / p;
  grid.grid_w = img.width / p;
  const auto dim = p * p * img.channels;
  std::vector<double> tokens(grid.grid_h * grid.grid_w * dim);
  for (std::size_t gy = 0; gy < grid.grid_h; ++gy) {
    for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
      double* tok = tokens.data() + (gy * grid.grid_w + gx) * dim;
      for (std::size_t py = 0; py < p; ++py) {
        for (std::size_t px = 0; px < p; ++px) {
          for (std::size_t c = 0; c < img.channels; ++c) {
            tok[(py * p + px) * img.channels + c] = img.at(c, gy * p + py, gx * p + px);
          }
        }
      }
    }
  }
  grid.tokens = Tensor::from({grid.grid_h * grid.grid_w, dim}, std::move(tokens));
  return grid;
}

Image unpatchify(std::span<const double> tokens, std::size_t patch_size, std::size_t channels,
                 std::size_t resolution) {
  const auto p = patch_size;
  if (p == 0 || resolution % p != 0) {
    throw ShapeError("unpatchify: resolution " + std::to_string(resolution) +
                     " not divisible by patch size " + std::to_string(p));
  }
  const auto g = resolution / p;
  const auto dim = p * p * channels;
  if (tokens.size() != g * g * dim) {
    throw ShapeError("unpatchify: expected " + std::to_string(g * g) + " tokens of width " +
                     std::to_string(dim) + ", got " + std::to_string(tokens.size()) + " values");
  }
  Image img(channels, resolution, resolution);
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      const double* tok = tokens.data() + (gy * g + gx) * dim;
      for (std::size_t py = 0; py < p; ++py) {
        for (std::size_t px = 0; px < p; ++px) {
          for (std::size_t c = 0; c < channels; ++c) {
            img.at(c, gy * p + py, gx * p + px) = tok[(py * p + px) * channels + c];
          }
        }
      }
    }
  }
  return img;
}

Image unpatchify(const Tensor& tokens, std::size_t patch_size, std::size_t resolution) {
  if (tokens.rank() != 2 || patch_size == 0 || tokens.dim(1) % (patch_size * patch_size) != 0) {
    throw ShapeError("unpatchify: token tensor " + shape_string(tokens.shape()) +
                     " incompatible with patch size " + std::to_string(patch_size));
  }
  return unpatchify(tokens.data(), patch_size, tokens.dim(1) / (patch_size * patch_size),
                    resolution);
}

std::vector<std::uint8_t> PackedBatch::dense_mask() const {
  const auto n = total_tokens();
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask[i * n + j] = attends(i, j) ? 1 : 0;
  }
  return mask;
}

Tensor PackedBatch::sequence_rows(const Tensor& per_token, std::size_t i) const {
  const auto& s = sequences.at(i);
  return ops::slice_rows(per_token, s.offset, s.offset + s.length);
}

PackedBatch pack(std::span<const SequenceSpec> sequences) {
  if (sequences.empty()) throw std::invalid_argument("pack: no sequences to pack");
  PackedBatch batch;
  std::vector<Tensor> parts;
  std::size_t offset = 0;
  batch.offsets.push_back(0);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    const auto len = s.grid.grid_h * s.grid.grid_w;
    if (len == 0 || s.grid.tokens.rank() != 2 || s.grid.tokens.dim(0) != len) {
      throw ShapeError("pack: sequence " + std::to_string(i) + " has tokens " +
                       shape_string(s.grid.tokens.shape()) + " for a " +
                       std::to_string(s.grid.grid_h) + "x" + std::to_string(s.grid.grid_w) +
                       " grid");
    }
    if (!parts.empty() && parts.front().dim(1) != s.grid.tokens.dim(1)) {
      throw ShapeError("pack", parts.front().shape(), s.grid.tokens.shape());
    }
    SequenceInfo info;
    info.offset = offset;
    info.length = len;
    info.grid_h = s.grid.grid_h;
    info.grid_w = s.grid.grid_w;
    info.t = s.t;
    info.label = s.label;
    info.resolution = s.grid.grid_h;
    batch.sequences.push_back(info);
    for (std::size_t r = 0; r < s.grid.grid_h; ++r) {
      for (std::size_t c = 0; c < s.grid.grid_w; ++c) {
        batch.token_sequence.push_back(i);
        batch.positions.push_back({static_cast<double>(r), static_cast<double>(c)});
      }
    }
    offset += len;
    batch.offsets.push_back(offset);
    parts.push_back(s.grid.tokens);
  }
  batch.tokens = ops::concat_rows(parts);
  return batch;
}

}  // namespace pixelflow
