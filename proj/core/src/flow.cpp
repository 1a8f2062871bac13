#include "pixelflow/flow.hpp"

#include <stdexcept>
#include <string>

#include "pixelflow/ops.hpp"
#include "pixelflow/resample.hpp"

namespace pixelflow {

StageEndpoints make_endpoints(const Image& x1, const Image& eps, std::size_t stage,
                              const StageSchedule& schedule) {
  const auto target = schedule.target_resolution();
  if (x1.height != target || x1.width != target) {
    throw ShapeError("make_endpoints: clean image is " + std::to_string(x1.height) + "x" +
                     std::to_string(x1.width) + ", schedule target is " + std::to_string(target));
  }
  const auto res = schedule.resolution(stage);
  if (eps.channels != x1.channels || eps.height != res || eps.width != res) {
    throw ShapeError("make_endpoints", Shape{x1.channels, res, res},
                     Shape{eps.channels, eps.height, eps.width});
  }
  const double t0 = schedule.t_start(stage);
  const double t1 = schedule.t_end(stage);

  StageEndpoints ends;
  if (t0 == 0.0) {
    ends.start = eps;
  } else {
    const Image coarse = upsample(downsample(x1, std::size_t{2} << stage), 2);
    ends.start = lincomb(t0, coarse, 1.0 - t0, eps);
  }
  ends.end = lincomb(t1, downsample(x1, std::size_t{1} << stage), 1.0 - t1, eps);
  return ends;
}

Image interpolate(const Image& start, const Image& end, double tau) {
  require_same_shape("interpolate", start, end);
  if (tau == 0.0) return start;
  if (tau == 1.0) return end;
  return lincomb(tau, end, 1.0 - tau, start);
}

Image velocity_target(const Image& start, const Image& end) {
  return lincomb(1.0, end, -1.0, start);
}

TrainingExample sample_training_example(const Image& x1, ClassLabel label,
                                        const StageSchedule& schedule, Rng& rng,
                                        double p_drop) {
  TrainingExample ex;
  ex.stage = static_cast<std::size_t>(rng.below(schedule.stages()));
  ex.tau = rng.uniform();
  ex.t = schedule.global_time(ex.stage, ex.tau);
  const auto res = schedule.resolution(ex.stage);
  const Image eps = gaussian_image(x1.channels, res, res, rng);
  const bool drop = rng.uniform() < p_drop;
  ex.label = drop ? std::nullopt : label;

  const auto ends = make_endpoints(x1, eps, ex.stage, schedule);
  ex.x_t = interpolate(ends.start, ends.end, ex.tau);
  ex.v_target = velocity_target(ends.start, ends.end);
  return ex;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeError("mse_loss", pred.shape(), target.shape());
  const auto diff = ops::sub(pred, target);
  return ops::mean(ops::mul(diff, diff));
}

}  // namespace pixelflow
