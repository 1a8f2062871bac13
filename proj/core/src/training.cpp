#include "pixelflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pixelflow {

namespace {

void require_compatible(const RunConfig& config, const Dataset& data) {
  const auto& m = config.model;
  if (data.size() == 0) throw std::invalid_argument("trainer: dataset is empty");
  if (data.channels != m.channels || data.resolution != m.max_resolution) {
    throw std::invalid_argument("trainer: dataset images are " + std::to_string(data.channels) + "x" +
                                std::to_string(data.resolution) + "^2 but the model expects " +
                                std::to_string(m.channels) + "x" + std::to_string(m.max_resolution) + "^2");
  }
  if (data.num_classes > m.num_classes) {
    throw std::invalid_argument("trainer: dataset has more classes than the model");
  }
}

ModelParams fresh_params(const RunConfig& config) {
  Rng init = Rng::derive(config.train.seed, 0);
  return ModelParams::init(config.model, init);
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(std::uint64_t step, double loss)
    : std::runtime_error("non-finite loss " + std::to_string(loss) + " at step " + std::to_string(step)),
      step_(step) {}

std::string format_log_row(const StepResult& r) {
  char loss[40];
  std::snprintf(loss, sizeof loss, "%.17g", r.loss);
  std::string row = std::to_string(r.step) + "," + loss + ",";
  for (std::size_t s = 0; s < r.stage_counts.size(); ++s) {
    if (s) row += '/';
    row += std::to_string(r.stage_counts[s]);
  }
  return row;
}

double ema_decay_at(double decay, std::uint64_t completed) {
  const double c = static_cast<double>(completed);
  return std::min(decay, (1.0 + c) / (10.0 + c));
}

TrainingBatch assemble_batch(const Dataset& data, std::span<const std::size_t> indices,
                             const StageSchedule& schedule, Rng& rng, double p_drop) {
  const auto p = schedule.patch_size();
  std::vector<SequenceSpec> specs;
  specs.reserve(indices.size());
  std::vector<double> targets;
  std::vector<std::size_t> counts(schedule.stages(), 0);
  for (auto i : indices) {
    auto ex = sample_training_example(data.images.at(i), data.labels.at(i), schedule, rng, p_drop);
    ++counts[ex.stage];
    auto v = patchify(ex.v_target, p);
    targets.insert(targets.end(), v.tokens.data().begin(), v.tokens.data().end());
    specs.push_back({patchify(ex.x_t, p), ex.t, ex.label});
  }
  TrainingBatch out{pack(specs), {}, std::move(counts)};
  const auto width = out.batch.tokens.dim(1);
  out.targets = Tensor::from({out.batch.total_tokens(), width}, std::move(targets));
  return out;
}

Trainer::Trainer(RunConfig config, Dataset data)
    : config_(std::move(config)),
      data_(std::move(data)),
      schedule_(config_.build_stage_schedule()),
      params_(fresh_params(config_)),
      named_(params_.named()),
      optimizer_(OptimizerState::init(named_, config_.train.optimizer)),
      ema_(EmaShadow::init(named_)),
      rng_(Rng::derive(config_.train.seed, 1)) {
  require_compatible(config_, data_);
}

Trainer::Trainer(RunConfig config, Dataset data, const Checkpoint& resume)
    : config_(std::move(config)),
      data_(std::move(data)),
      schedule_(config_.build_stage_schedule()),
      params_(resume.params.clone()),
      named_(params_.named()),
      optimizer_(resume.optimizer),
      ema_(resume.ema ? *resume.ema : EmaShadow::init(named_)),
      step_(resume.step) {
  require_compatible(config_, data_);
  if (!(params_.config == config_.model)) throw std::invalid_argument("trainer: checkpoint model config differs");
  if (!(resume.schedule == schedule_)) throw std::invalid_argument("trainer: checkpoint schedule differs");
  rng_.restore(resume.rng_state);
}

StepResult Trainer::step() {
  const auto n = data_.size();
  const auto batch = config_.train.batch_size ? config_.train.batch_size : n;
  std::vector<std::size_t> indices(batch);
  for (std::size_t j = 0; j < batch; ++j) indices[j] = (step_ * batch + j) % n;

  const auto rng_before = rng_.state();
  auto tb = assemble_batch(data_, indices, schedule_, rng_, config_.train.p_drop);
  for (auto& p : named_) p.tensor.zero_grad();
  Tensor loss;
  try {
    const Tensor pred = forward(params_, tb.batch);
    loss = packed_mse_loss(pred, tb.targets, tb.batch);
  } catch (const NonFiniteActivation&) {
    rng_.restore(rng_before);
    throw;
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    rng_.restore(rng_before);
    throw NonFiniteLoss(step_ + 1, value);
  }
  loss.backward();
  try {
    adamw_update(named_, optimizer_);
  } catch (const NonFiniteGradient&) {
    rng_.restore(rng_before);
    throw;
  }
  ema_.update(named_, ema_decay_at(config_.train.ema_decay, step_));
  ++step_;
  return {step_, value, std::move(tb.stage_counts)};
}

Checkpoint Trainer::checkpoint() const {
  return Checkpoint{params_.clone(), schedule_, optimizer_, ema_, step_, rng_.state()};
}

ModelParams Trainer::ema_params() const {
  ModelParams out = params_.clone();
  auto named = out.named();
  ema_.copy_to(named);
  return out;
}

}  // namespace pixelflow
