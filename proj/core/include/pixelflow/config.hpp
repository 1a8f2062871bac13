#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pixelflow/backbone.hpp"
#include "pixelflow/dataset.hpp"
#include "pixelflow/optim.hpp"
#include "pixelflow/sampler.hpp"
#include "pixelflow/schedule.hpp"

namespace pixelflow {

/// Malformed or invalid run configuration. `line()` is 0 when the problem is
/// not tied to a single line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ScheduleConfig {
  std::size_t stages = 2;
  /// Optional custom partition in increasing global time (S+1 entries).
  std::vector<double> boundaries;
};

struct TrainConfig {
  std::size_t steps = 2000;
  /// Examples per step. 0 means one example per dataset image.
  std::size_t batch_size = 0;
  AdamWConfig optimizer;
  double ema_decay = 0.999;
  double p_drop = 0.1;
  std::uint64_t seed = 0;
  /// 0 disables periodic checkpoints; the final checkpoint is always written.
  std::size_t checkpoint_every = 500;
  std::filesystem::path out_dir = "run";
};

struct DataConfig {
  /// PXFD file. When it does not exist and `generate` is set, a shapes
  /// dataset is generated and written there.
  std::filesystem::path path = "shapes.pxfd";
  bool generate = true;
  std::size_t count = 8;
  std::uint64_t seed = 0;
};

struct RunConfig {
  ModelConfig model;
  ScheduleConfig schedule;
  TrainConfig train;
  DataConfig data;
  SampleConfig sample;
  /// Sample from the EMA weights when the checkpoint carries them.
  bool sample_ema = true;

  /// Target resolution is model.max_resolution.
  StageSchedule build_stage_schedule() const;
  /// Cross-field validation; throws ConfigError.
  void validate() const;
};

/// Parses flat "key = value" lines grouped under [model], [schedule],
/// [train], [data] and [sample] headers. '#' starts a comment. Unknown
/// sections or keys, duplicate keys and out-of-range values are rejected.
/// Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Serializes every field in the format accepted by parse_run_config.
std::string format_run_config(const RunConfig& config);

}  // namespace pixelflow
