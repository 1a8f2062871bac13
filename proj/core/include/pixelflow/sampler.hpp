#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pixelflow/backbone.hpp"
#include "pixelflow/flow.hpp"
#include "pixelflow/image.hpp"
#include "pixelflow/rng.hpp"
#include "pixelflow/schedule.hpp"

namespace pixelflow {

enum class Solver { euler, dopri5 };

Solver parse_solver(const std::string& name);
std::string solver_name(Solver s);

struct SampleConfig {
  std::size_t steps_per_stage = 30;
  Solver solver = Solver::euler;
  double atol = 1e-6;
  double cfg_max = 1.0;
  /// Guidance fraction per stage in denoising order (lowest resolution
  /// first). Empty selects the default stage-wise schedule.
  std::vector<double> cfg_fractions;
  /// Carried-noise attenuation at stage transitions.
  double renoise_lambda = 0.5;
  std::uint64_t seed = 0;

  void validate(std::size_t stages) const;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Velocity field in rescaled stage time. `at` carries the stage, tau and
/// the matching global time.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual Image velocity(const Image& x, const StagePoint& at, ClassLabel label) const = 0;
  /// Conditional and unconditional velocity for the same state. The default
  /// makes two calls; models may evaluate both in one batch.
  virtual std::pair<Image, Image> velocity_pair(const Image& x, const StagePoint& at,
                                                std::size_t label) const;
};

/// Adapts a plain function (used for analytic oracles and tests).
class FunctionVelocity final : public VelocityModel {
 public:
  using Fn = std::function<Image(const Image&, const StagePoint&, ClassLabel)>;
  explicit FunctionVelocity(Fn fn) : fn_(std::move(fn)) {}
  Image velocity(const Image& x, const StagePoint& at, ClassLabel label) const override {
    return fn_(x, at, label);
  }

 private:
  Fn fn_;
};

/// The trained transformer as a velocity field. The conditional and null
/// branches are packed into one forward pass. Evaluation runs without
/// recording gradients.
class ModelVelocity final : public VelocityModel {
 public:
  explicit ModelVelocity(const ModelParams& params) : params_(params) {}
  Image velocity(const Image& x, const StagePoint& at, ClassLabel label) const override;
  std::pair<Image, Image> velocity_pair(const Image& x, const StagePoint& at,
                                        std::size_t label) const override;

 private:
  const ModelParams& params_;
};

/// v_uncond + w (v_cond - v_uncond)
Image cfg_velocity(const Image& v_cond, const Image& v_uncond, double w);

/// Default guidance fractions in denoising order. Four stages use
/// (0, 1/6, 2/3, 1); other stage counts interpolate those anchors linearly
/// over normalized stage position. A single stage gets fraction 1.
std::vector<double> default_cfg_fractions(std::size_t stages);

/// Guidance weight 1 + f_s (cfg_max - 1) for stage `stage`.
double stage_cfg_weight(std::size_t stage, const StageSchedule& schedule, double cfg_max,
                        const std::vector<double>& fractions = {});

/// Guided velocity; skips the unconditional branch when w == 1 or the label
/// is null.
Image guided_velocity(const VelocityModel& model, const Image& x, const StagePoint& at,
                      ClassLabel label, double w);

struct StageStats {
  std::size_t evaluations = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Fixed-step Euler over a uniform tau grid on [0, 1].
Image euler_stage(const VelocityModel& model, Image x, std::size_t stage,
                  const StageSchedule& schedule, std::size_t n_steps, double w,
                  ClassLabel label, StageStats* stats = nullptr);

/// Adaptive Dormand-Prince 5(4) over tau in [0, 1]. A step is accepted when
/// the RMS of the embedded error estimate divided by `atol` is at most 1.
/// The controller uses safety 0.9 and clamps step growth to [0.2, 5]. The
/// first trial step spans the whole interval.
Image dopri5_stage(const VelocityModel& model, Image x, std::size_t stage,
                   const StageSchedule& schedule, double atol, double w, ClassLabel label,
                   StageStats* stats = nullptr);

/// Noise std at the start of the next stage must be restored after
/// upsampling: x_next = lambda * Up(x_end, 2) + gamma * eps_new with
/// gamma = sqrt((1 - t_s)^2 - lambda^2 (1 - t_e)^2), where t_e is the end
/// time of `from_stage` and t_s the start time of `from_stage - 1`.
Image renoise_transition(const Image& x_end, std::size_t from_stage,
                         const StageSchedule& schedule, double lambda, Rng& rng);
double renoise_gamma(std::size_t from_stage, const StageSchedule& schedule, double lambda);

/// Full cascade: Gaussian noise at the lowest resolution, integrate every
/// stage, renoise between stages, clamp the final image to [-1, 1]. All
/// randomness comes from `config.seed`.
Image generate(const VelocityModel& model, ClassLabel label, const StageSchedule& schedule,
               const SampleConfig& config, std::size_t channels = 3);

}  // namespace pixelflow
