#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixelflow/backbone.hpp"
#include "pixelflow/checkpoint.hpp"
#include "pixelflow/config.hpp"
#include "pixelflow/dataset.hpp"
#include "pixelflow/optim.hpp"
#include "pixelflow/packing.hpp"
#include "pixelflow/rng.hpp"

namespace pixelflow {

/// Raised before the optimizer step when the loss is NaN or infinite. The
/// trainer state is left as it was before the step.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::uint64_t step, double loss);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

struct StepResult {
  std::uint64_t step = 0;  // 1-based index of the completed step
  double loss = 0.0;
  /// Number of examples drawn for each stage.
  std::vector<std::size_t> stage_counts;
};

/// "step,loss,stage_mix" with the loss printed to 17 significant digits and
/// the stage mix as per-stage counts joined by '/'.
std::string format_log_row(const StepResult& r);
inline constexpr const char* kLogHeader = "step,loss,stage_mix";

/// EMA decay used for the update after `completed` optimizer steps:
/// min(decay, (1 + completed) / (10 + completed)). The warm-up keeps the
/// shadow from being dominated by the initial weights in short runs.
double ema_decay_at(double decay, std::uint64_t completed);

/// Packed batch plus matching velocity targets for one training step.
struct TrainingBatch {
  PackedBatch batch;
  Tensor targets;
  std::vector<std::size_t> stage_counts;
};

/// Draws one (stage, tau, noise, label drop) per listed image and packs the
/// resulting noisy states into one mixed-resolution batch.
TrainingBatch assemble_batch(const Dataset& data, std::span<const std::size_t> indices,
                             const StageSchedule& schedule, Rng& rng, double p_drop);

class Trainer {
 public:
  /// Fresh model initialised from `config.train.seed`.
  Trainer(RunConfig config, Dataset data);
  /// Continues from a checkpoint taken of an identically configured run.
  Trainer(RunConfig config, Dataset data, const Checkpoint& resume);

  StepResult step();
  std::uint64_t steps_done() const { return step_; }

  Checkpoint checkpoint() const;
  const ModelParams& params() const { return params_; }
  /// Parameters with the EMA shadow copied in.
  ModelParams ema_params() const;
  const StageSchedule& schedule() const { return schedule_; }
  const RunConfig& config() const { return config_; }

 private:
  RunConfig config_;
  Dataset data_;
  StageSchedule schedule_;
  ModelParams params_;
  std::vector<NamedTensor> named_;
  OptimizerState optimizer_;
  EmaShadow ema_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

}  // namespace pixelflow
