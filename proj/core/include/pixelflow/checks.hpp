#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pixelflow/backbone.hpp"
#include "pixelflow/config.hpp"
#include "pixelflow/gradcheck.hpp"
#include "pixelflow/packing.hpp"

namespace pixelflow {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Small model used for full finite-difference sweeps: depth 2, width 32,
/// patch 2, two heads, 8x8 images.
ModelConfig gradient_check_model();

/// Two-sequence pack (an 8x8 and a 4x4 image, one with a null label) of
/// random raw tokens for `config`.
PackedBatch gradient_check_batch(const ModelConfig& config, Rng& rng);

struct GradientCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-6;
  /// Elements probed per tensor; 0 probes every element.
  std::size_t probes_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Hook applied to the analytic gradients before comparison, so the
  /// harness itself can be tested against a deliberately wrong gradient.
  std::function<void(std::vector<double>& grad, const std::string& name)> corrupt;
};

struct TensorGradientResult {
  std::string name;
  GradientComparison comparison;
};

struct GradientCheckReport {
  std::vector<TensorGradientResult> tensors;
  /// Norm-relative error over all probed elements together.
  GradientComparison overall;
  double worst_tensor_error = 0.0;
  std::string worst_tensor;
  std::size_t probes = 0;
  bool passed = false;
};

/// Compares backprop against central differences for every parameter of a
/// randomized model with the MSE loss on `gradient_check_batch`.
GradientCheckReport check_backbone_gradients(const ModelConfig& config,
                                             const GradientCheckOptions& options);

/// Maximum element-wise difference between one packed forward and separate
/// forwards of each sequence.
double packing_discrepancy(const ModelParams& params, std::span<const SequenceSpec> sequences);

/// Runs every invariant check and returns one result per check, in a fixed
/// order, each name appearing once. Model-dependent checks use `config`.
std::vector<CheckResult> run_invariant_checks(const RunConfig& config);

/// "PASS name  detail" / "FAIL name  detail" lines plus a summary line.
std::string format_check_report(const std::vector<CheckResult>& results);

}  // namespace pixelflow
