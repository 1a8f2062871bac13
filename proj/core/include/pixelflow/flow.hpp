#pragma once

#include <cstddef>
#include <optional>

#include "pixelflow/image.hpp"
#include "pixelflow/rng.hpp"
#include "pixelflow/schedule.hpp"
#include "pixelflow/tensor.hpp"

namespace pixelflow {

/// Class condition; std::nullopt is the dropped ("null") label used for the
/// unconditional branch of classifier-free guidance.
using ClassLabel = std::optional<std::size_t>;

struct StageEndpoints {
  Image start;
  Image end;
};

struct TrainingExample {
  Image x_t;
  Image v_target;
  std::size_t stage = 0;
  double tau = 0.0;
  double t = 0.0;
  ClassLabel label;
};

/// Start and end states of `stage` for clean image `x1` (target resolution)
/// and noise `eps` (stage resolution). Both endpoints share the same noise:
///
///   start = t0 * Up(Down(x1, 2^(s+1)), 2) + (1 - t0) * eps
///   end   = t1 * Down(x1, 2^s)            + (1 - t1) * eps
///
/// When t0 = 0 the start state is eps itself and the clean term is never
/// formed.
StageEndpoints make_endpoints(const Image& x1, const Image& eps, std::size_t stage,
                              const StageSchedule& schedule);

/// tau * end + (1 - tau) * start
Image interpolate(const Image& start, const Image& end, double tau);

/// end - start; the derivative of `interpolate` with respect to tau.
Image velocity_target(const Image& start, const Image& end);

/// Draws stage ~ U{0..S-1}, tau ~ U[0, 1), fresh noise at the stage
/// resolution and drops the label with probability `p_drop`.
TrainingExample sample_training_example(const Image& x1, ClassLabel label,
                                        const StageSchedule& schedule, Rng& rng,
                                        double p_drop);

/// Mean of squared element-wise differences (recorded on the tape).
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace pixelflow
