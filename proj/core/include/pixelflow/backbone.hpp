#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pixelflow/flow.hpp"
#include "pixelflow/image.hpp"
#include "pixelflow/optim.hpp"
#include "pixelflow/packing.hpp"
#include "pixelflow/rng.hpp"
#include "pixelflow/tensor.hpp"

namespace pixelflow {

struct ModelConfig {
  std::size_t hidden_dim = 256;
  std::size_t depth = 6;
  std::size_t heads = 4;
  std::size_t patch_size = 2;
  std::size_t channels = 3;
  std::size_t num_classes = 8;
  std::size_t max_resolution = 32;
  std::size_t mlp_ratio = 4;
  /// Width of the sinusoidal features for time and resolution.
  std::size_t frequency_dim = 256;

  std::size_t head_dim() const { return hidden_dim / heads; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class NonFiniteActivation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BlockParams {
  Tensor ada_w, ada_b;    // conditioning -> 6 x (shift, scale, gate)
  Tensor qkv_w, qkv_b;
  Tensor proj_w, proj_b;
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;
};

/// Learnable weights of the velocity transformer.
struct ModelParams {
  ModelConfig config;
  Tensor patch_w, patch_b;
  Tensor time_w1, time_b1, time_w2, time_b2;
  Tensor res_w1, res_b1, res_w2, res_b2;
  /// [num_classes + 1, hidden]; the last row is the null label.
  Tensor class_table;
  std::vector<BlockParams> blocks;
  Tensor final_ada_w, final_ada_b;
  Tensor head_w, head_b;

  /// adaLN-Zero initialization: modulation weights and the output head start
  /// at zero, so the untrained network predicts zero velocity everywhere.
  static ModelParams init(const ModelConfig& config, Rng& rng);

  /// Stable ordering and names used by the optimizer and checkpoints. The
  /// returned tensors alias this object's storage.
  std::vector<NamedTensor> named() const;
  std::size_t parameter_count() const;
  ModelParams clone() const;
};

/// Perturbs every parameter with N(0, stddev^2) noise, including the
/// zero-initialized ones. Used to get non-degenerate gradients in checks.
void randomize_parameters(ModelParams& params, Rng& rng, double stddev);

/// Sinusoidal features of `value` (DiT layout: cosines then sines).
std::vector<double> sinusoidal_embedding(double value, std::size_t dim,
                                         double max_period = 10000.0);

/// Conditioning vectors [sequences, hidden]: MLP(sin(1000 t)) +
/// MLP(sin(grid extent)) + class row (the null row for a dropped label).
Tensor embed_conditioning(const ModelParams& params, std::span<const SequenceInfo> sequences);
Tensor embed_conditioning(const ModelParams& params, double t, std::size_t resolution,
                          ClassLabel label);

/// Velocity tokens [total_tokens, p * p * C] for a packed batch of raw patch
/// tokens. Throws NonFiniteActivation naming the block on overflow.
Tensor forward(const ModelParams& params, const PackedBatch& batch);

/// Splits packed velocity tokens back into per-sequence images.
std::vector<Image> unpack_images(const Tensor& tokens, const PackedBatch& batch,
                                 std::size_t patch_size);

/// Average over sequences of the per-sequence mean squared error between
/// predicted and target tokens.
Tensor packed_mse_loss(const Tensor& pred, const Tensor& target, const PackedBatch& batch);

}  // namespace pixelflow
