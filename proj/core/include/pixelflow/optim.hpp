#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixelflow/tensor.hpp"

namespace pixelflow {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Raised for a non-finite gradient; names the offending parameter.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerState {
  AdamWConfig hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState init(std::span<const NamedTensor> params, AdamWConfig hyper);
};

/// One AdamW step (decoupled weight decay, bias-corrected moments) using the
/// gradients currently stored on `params`. A parameter without a gradient
/// buffer is treated as having zero gradient. Nothing is modified when any
/// gradient is non-finite.
void adamw_update(std::span<NamedTensor> params, OptimizerState& state);

/// Exponential moving average of parameter values.
struct EmaShadow {
  std::vector<std::vector<double>> values;

  static EmaShadow init(std::span<const NamedTensor> params);
  /// shadow <- decay * shadow + (1 - decay) * params
  void update(std::span<const NamedTensor> params, double decay);
  /// Copies the shadow values into `params`.
  void copy_to(std::span<NamedTensor> params) const;
};

}  // namespace pixelflow
