#include "pixelflow/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pixelflow {

StageSchedule::StageSchedule(std::vector<double> boundaries, std::size_t target,
                             std::size_t patch)
    : boundaries_(std::move(boundaries)), target_(target), patch_(patch) {
  if (boundaries_.size() < 2) throw std::invalid_argument("schedule: need at least one stage");
  if (patch_ == 0) throw std::invalid_argument("schedule: patch size must be positive");
  if (boundaries_.front() != 0.0 || boundaries_.back() != 1.0) {
    throw std::invalid_argument("schedule: time partition must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    if (!(boundaries_[i] > boundaries_[i - 1])) {
      throw std::invalid_argument("schedule: time partition must be strictly increasing");
    }
  }
  const auto S = stages();
  if (S > 30) throw std::invalid_argument("schedule: too many stages");
  const std::size_t lowest = std::size_t{1} << (S - 1);
  if (target_ == 0 || target_ % (lowest * patch_) != 0) {
    throw std::invalid_argument("schedule: target resolution " + std::to_string(target_) +
                                " not divisible by 2^(S-1) * patch = " +
                                std::to_string(lowest * patch_));
  }
  if (kickoff_grid() < 2) {
    throw std::invalid_argument("schedule: kickoff token grid " + std::to_string(kickoff_grid()) +
                                "x" + std::to_string(kickoff_grid()) + " is below 2x2");
  }
}

StageSchedule StageSchedule::uniform(std::size_t stages, std::size_t target_resolution,
                                     std::size_t patch_size) {
  if (stages == 0) throw std::invalid_argument("schedule: need at least one stage");
  std::vector<double> b(stages + 1);
  for (std::size_t i = 0; i <= stages; ++i) {
    b[i] = static_cast<double>(i) / static_cast<double>(stages);
  }
  return StageSchedule(std::move(b), target_resolution, patch_size);
}

StageSchedule StageSchedule::with_boundaries(std::vector<double> boundaries,
                                             std::size_t target_resolution,
                                             std::size_t patch_size) {
  return StageSchedule(std::move(boundaries), target_resolution, patch_size);
}

void StageSchedule::require_stage(std::size_t stage) const {
  if (stage >= stages()) {
    throw std::out_of_range("schedule: stage " + std::to_string(stage) + " out of range for " +
                            std::to_string(stages()) + " stages");
  }
}

std::size_t StageSchedule::resolution(std::size_t stage) const {
  require_stage(stage);
  return target_ >> stage;
}

double StageSchedule::t_start(std::size_t stage) const {
  require_stage(stage);
  return boundaries_[stages() - 1 - stage];
}

double StageSchedule::t_end(std::size_t stage) const {
  require_stage(stage);
  return boundaries_[stages() - stage];
}

std::size_t StageSchedule::kickoff_grid() const {
  return (target_ >> (stages() - 1)) / patch_;
}

StagePoint StageSchedule::locate(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::out_of_range("schedule: global time " + std::to_string(t) + " outside [0, 1]");
  }
  const auto S = stages();
  // Interval i (in time order) is [b[i], b[i+1]); t = 1 belongs to the last.
  std::size_t i = S - 1;
  for (std::size_t k = 0; k < S; ++k) {
    if (t < boundaries_[k + 1]) {
      i = k;
      break;
    }
  }
  StagePoint p;
  p.stage = S - 1 - i;
  p.t = t;
  p.tau = (t - boundaries_[i]) / (boundaries_[i + 1] - boundaries_[i]);
  return p;
}

double StageSchedule::global_time(std::size_t stage, double tau) const {
  const double t0 = t_start(stage);
  const double t1 = t_end(stage);
  if (tau == 1.0) return t1;
  return t0 + tau * (t1 - t0);
}

StageSchedule build_schedule(std::size_t stages, std::size_t target_resolution,
                             std::size_t patch_size) {
  return StageSchedule::uniform(stages, target_resolution, patch_size);
}

}  // namespace pixelflow
