#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pixelflow/backbone.hpp"
#include "pixelflow/optim.hpp"
#include "pixelflow/schedule.hpp"

namespace pixelflow {

/// Everything needed to resume training bit-for-bit.
struct Checkpoint {
  ModelParams params;
  StageSchedule schedule;
  OptimizerState optimizer;
  std::optional<EmaShadow> ema;
  std::uint64_t step = 0;
  std::string rng_state;
};

/// PXFC v1, little-endian: "PXFC", u32 version, model config (9 x u32),
/// schedule (u32 stages, u32 target, u32 patch, f64 boundaries[stages+1]),
/// u64 training step, optimizer hyper-parameters (u64 step, 5 x f64),
/// length-prefixed rng state, u32 record count, then named records
/// (string name, u32 rank, u32 dims[rank], f64 data). Record names are
/// "param/<name>", "adam_m/<name>", "adam_v/<name>" and "ema/<name>".
/// Values are stored as float64 so a resumed run continues exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Validates every record's shape against the stored model config; a
/// mismatch raises DataError naming the parameter.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Same as load_checkpoint, but additionally requires the stored model
/// config and schedule to equal the expected ones.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected_model,
                           const StageSchedule& expected_schedule);

}  // namespace pixelflow
