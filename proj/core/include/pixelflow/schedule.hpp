#pragma once

#include <cstddef>
#include <vector>

namespace pixelflow {

/// Where a global time falls inside the cascade.
struct StagePoint {
  std::size_t stage = 0;
  double tau = 0.0;  // rescaled time within the stage, in [0, 1]
  double t = 0.0;    // global time
};

/// The resolution ladder and the partition of global time [0, 1] into
/// per-stage intervals.
///
/// Stage 0 runs at the target resolution and ends at t = 1; stage S-1 is the
/// lowest resolution and starts at t = 0. Generation therefore walks the
/// stages in decreasing index order. Resolutions halve per stage.
class StageSchedule {
 public:
  /// Uniform partition: stage s covers [(S-1-s)/S, (S-s)/S].
  static StageSchedule uniform(std::size_t stages, std::size_t target_resolution,
                               std::size_t patch_size);

  /// Custom partition. `boundaries` runs in increasing global time, has S+1
  /// entries, starts at 0, ends at 1 and is strictly increasing. Stage s
  /// covers [boundaries[S-1-s], boundaries[S-s]].
  static StageSchedule with_boundaries(std::vector<double> boundaries,
                                       std::size_t target_resolution, std::size_t patch_size);

  std::size_t stages() const { return boundaries_.size() - 1; }
  std::size_t target_resolution() const { return target_; }
  std::size_t patch_size() const { return patch_; }
  const std::vector<double>& boundaries() const { return boundaries_; }

  /// target / 2^s
  std::size_t resolution(std::size_t stage) const;
  double t_start(std::size_t stage) const;
  double t_end(std::size_t stage) const;
  /// Token grid extent of the lowest-resolution stage.
  std::size_t kickoff_grid() const;

  /// Stage containing global time t (t0 <= t < t1; t = 1 maps to stage 0)
  /// and the rescaled time tau = (t - t0) / (t1 - t0).
  StagePoint locate(double t) const;
  /// Global time for (stage, tau).
  double global_time(std::size_t stage, double tau) const;

  friend bool operator==(const StageSchedule&, const StageSchedule&) = default;

 private:
  StageSchedule(std::vector<double> boundaries, std::size_t target, std::size_t patch);
  void require_stage(std::size_t stage) const;

  std::vector<double> boundaries_;
  std::size_t target_ = 0;
  std::size_t patch_ = 0;
};

/// Convenience spelling of StageSchedule::uniform.
StageSchedule build_schedule(std::size_t stages, std::size_t target_resolution,
                             std::size_t patch_size);

}  // namespace pixelflow
