#include "pixelflow/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "pixelflow/resample.hpp"

namespace pixelflow {

namespace {

void require_finite(const Image& x, const char* solver, std::size_t step) {
  for (double v : x.values) {
    if (!std::isfinite(v)) {
      throw SolverError(std::string(solver) + ": non-finite state at step " + std::to_string(step));
    }
  }
}

StagePoint point(const StageSchedule& schedule, std::size_t stage, double tau) {
  return {stage, tau, schedule.global_time(stage, tau)};
}

// x + h * sum_i c_i k_i over the nonzero coefficients.
template <std::size_t N>
Image combine(const Image& x, double h, const std::array<double, N>& coef,
              const std::array<const Image*, N>& k) {
  Image out = x;
  for (std::size_t j = 0; j < N; ++j) {
    if (coef[j] == 0.0) continue;
    const double c = h * coef[j];
    const auto& kv = k[j]->values;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += c * kv[i];
  }
  return out;
}

}  // namespace

Solver parse_solver(const std::string& name) {
  if (name == "euler") return Solver::euler;
  if (name == "dopri5") return Solver::dopri5;
  throw std::invalid_argument("unknown solver '" + name + "' (expected euler or dopri5)");
}

std::string solver_name(Solver s) { return s == Solver::euler ? "euler" : "dopri5"; }

void SampleConfig::validate(std::size_t stages) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("sample config: " + what); };
  if (steps_per_stage < 1) fail("steps_per_stage must be at least 1");
  if (!(atol > 0.0)) fail("atol must be positive");
  if (!(cfg_max >= 1.0)) fail("cfg_max must be at least 1");
  if (!(renoise_lambda >= 0.0)) fail("renoise_lambda must be non-negative");
  if (!cfg_fractions.empty()) {
    if (cfg_fractions.size() != stages) fail("cfg_fractions needs one entry per stage");
    if (cfg_fractions.front() != 0.0 && stages > 1) fail("cfg_fractions must start at 0");
    if (cfg_fractions.back() != 1.0) fail("cfg_fractions must end at 1");
    for (std::size_t i = 1; i < cfg_fractions.size(); ++i) {
      if (cfg_fractions[i] < cfg_fractions[i - 1]) fail("cfg_fractions must be nondecreasing");
    }
  }
}

std::pair<Image, Image> VelocityModel::velocity_pair(const Image& x, const StagePoint& at,
                                                     std::size_t label) const {
  return {velocity(x, at, label), velocity(x, at, std::nullopt)};
}

Image ModelVelocity::velocity(const Image& x, const StagePoint& at, ClassLabel label) const {
  NoGradGuard no_grad;
  const SequenceSpec spec{patchify(x, params_.config.patch_size), at.t, label};
  const auto batch = pack(std::span<const SequenceSpec>(&spec, 1));
  return unpack_images(forward(params_, batch), batch, params_.config.patch_size).front();
}

std::pair<Image, Image> ModelVelocity::velocity_pair(const Image& x, const StagePoint& at,
                                                     std::size_t label) const {
  NoGradGuard no_grad;
  const auto grid = patchify(x, params_.config.patch_size);
  const std::array<SequenceSpec, 2> specs{SequenceSpec{grid, at.t, label},
                                          SequenceSpec{grid, at.t, std::nullopt}};
  const auto batch = pack(specs);
  auto images = unpack_images(forward(params_, batch), batch, params_.config.patch_size);
  return {std::move(images[0]), std::move(images[1])};
}

Image cfg_velocity(const Image& v_cond, const Image& v_uncond, double w) {
  require_same_shape("cfg_velocity", v_cond, v_uncond);
  Image out = v_uncond;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] += w * (v_cond.values[i] - v_uncond.values[i]);
  }
  return out;
}

std::vector<double> default_cfg_fractions(std::size_t stages) {
  static constexpr std::array<double, 4> anchor_value{0.0, 1.0 / 6.0, 2.0 / 3.0, 1.0};
  if (stages == 0) throw std::invalid_argument("default_cfg_fractions: no stages");
  if (stages == 1) return {1.0};
  if (stages == 4) return {anchor_value.begin(), anchor_value.end()};
  std::vector<double> out(stages);
  for (std::size_t k = 0; k < stages; ++k) {
    const double pos = 3.0 * static_cast<double>(k) / static_cast<double>(stages - 1);
    const auto seg = std::min<std::size_t>(static_cast<std::size_t>(pos), 2);
    const double frac = pos - static_cast<double>(seg);
    out[k] = anchor_value[seg] + frac * (anchor_value[seg + 1] - anchor_value[seg]);
  }
  return out;
}

double stage_cfg_weight(std::size_t stage, const StageSchedule& schedule, double cfg_max,
                        const std::vector<double>& fractions) {
  const auto S = schedule.stages();
  if (stage >= S) throw std::out_of_range("stage_cfg_weight: stage out of range");
  const auto f = fractions.empty() ? default_cfg_fractions(S) : fractions;
  if (f.size() != S) throw std::invalid_argument("stage_cfg_weight: one fraction per stage required");
  return 1.0 + f[S - 1 - stage] * (cfg_max - 1.0);
}

Image guided_velocity(const VelocityModel& model, const Image& x, const StagePoint& at,
                      ClassLabel label, double w) {
  if (w == 1.0 || !label) return model.velocity(x, at, label);
  auto [cond, uncond] = model.velocity_pair(x, at, *label);
  return cfg_velocity(cond, uncond, w);
}

Image euler_stage(const VelocityModel& model, Image x, std::size_t stage,
                  const StageSchedule& schedule, std::size_t n_steps, double w,
                  ClassLabel label, StageStats* stats) {
  if (n_steps == 0) throw std::invalid_argument("euler_stage: need at least one step");
  const double dt = 1.0 / static_cast<double>(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double tau = static_cast<double>(i) / static_cast<double>(n_steps);
    const Image v = guided_velocity(model, x, point(schedule, stage, tau), label, w);
    require_same_shape("euler_stage", x, v);
    for (std::size_t j = 0; j < x.size(); ++j) x.values[j] += dt * v.values[j];
    require_finite(x, "euler_stage", i);
    if (stats) {
      ++stats->evaluations;
      ++stats->accepted;
    }
  }
  return x;
}

Image dopri5_stage(const VelocityModel& model, Image x, std::size_t stage,
                   const StageSchedule& schedule, double atol, double w, ClassLabel label,
                   StageStats* stats) {
  if (!(atol > 0.0)) throw std::invalid_argument("dopri5_stage: atol must be positive");
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr std::array<double, 1> a2{1.0 / 5};
  constexpr std::array<double, 2> a3{3.0 / 40, 9.0 / 40};
  constexpr std::array<double, 3> a4{44.0 / 45, -56.0 / 15, 32.0 / 9};
  constexpr std::array<double, 4> a5{19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561,
                                     -212.0 / 729};
  constexpr std::array<double, 5> a6{9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                                     -5103.0 / 18656};
  constexpr std::array<double, 6> b5{35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192,
                                     -2187.0 / 6784, 11.0 / 84};
  // Fifth-order minus embedded fourth-order weights.
  constexpr std::array<double, 7> e{71.0 / 57600,      0.0,          -71.0 / 16695, 71.0 / 1920,
                                    -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
  constexpr double safety = 0.9, min_factor = 0.2, max_factor = 5.0, min_step = 1e-12;
  constexpr std::size_t max_steps = 100000;

  StageStats local;
  StageStats& st = stats ? *stats : local;
  auto f = [&](double tau, const Image& y) {
    ++st.evaluations;
    Image v = guided_velocity(model, y, point(schedule, stage, tau), label, w);
    require_same_shape("dopri5_stage", y, v);
    return v;
  };

  double tau = 0.0;
  double h = 1.0;
  Image k1 = f(tau, x);
  for (std::size_t step = 0; tau < 1.0; ++step) {
    if (step >= max_steps) throw SolverError("dopri5_stage: step budget exhausted");
    if (h < min_step) {
      throw SolverError("dopri5_stage: step size underflow at tau = " + std::to_string(tau));
    }
    h = std::min(h, 1.0 - tau);
    const Image k2 = f(tau + c2 * h, combine(x, h, a2, {&k1}));
    const Image k3 = f(tau + c3 * h, combine(x, h, a3, {&k1, &k2}));
    const Image k4 = f(tau + c4 * h, combine(x, h, a4, {&k1, &k2, &k3}));
    const Image k5 = f(tau + c5 * h, combine(x, h, a5, {&k1, &k2, &k3, &k4}));
    const Image k6 = f(tau + h, combine(x, h, a6, {&k1, &k2, &k3, &k4, &k5}));
    Image y = combine(x, h, b5, {&k1, &k2, &k3, &k4, &k5, &k6});
    const double tau_next = (tau + h >= 1.0 || 1.0 - (tau + h) < min_step) ? 1.0 : tau + h;
    Image k7 = f(tau_next, y);

    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double err = h * (e[0] * k1.values[i] + e[2] * k3.values[i] + e[3] * k4.values[i] +
                              e[4] * k5.values[i] + e[5] * k6.values[i] + e[6] * k7.values[i]);
      sq += (err / atol) * (err / atol);
    }
    const double norm = x.size() ? std::sqrt(sq / static_cast<double>(x.size())) : 0.0;
    if (!std::isfinite(norm)) throw SolverError("dopri5_stage: non-finite error estimate at step " + std::to_string(step));

    double factor = norm == 0.0 ? max_factor : safety * std::pow(norm, -0.2);
    if (norm <= 1.0) {
      require_finite(y, "dopri5_stage", step);
      x = std::move(y);
      k1 = std::move(k7);
      tau = tau_next;
      ++st.accepted;
      h *= std::clamp(factor, min_factor, max_factor);
    } else {
      ++st.rejected;
      h *= std::clamp(factor, min_factor, 1.0);
    }
  }
  return x;
}

double renoise_gamma(std::size_t from_stage, const StageSchedule& schedule, double lambda) {
  if (from_stage == 0 || from_stage >= schedule.stages()) {
    throw std::out_of_range("renoise_transition: no higher-resolution stage after stage " +
                            std::to_string(from_stage));
  }
  const double t_e = schedule.t_end(from_stage);
  const double t_s = schedule.t_start(from_stage - 1);
  const double target = (1.0 - t_s) * (1.0 - t_s);
  const double carried = lambda * lambda * (1.0 - t_e) * (1.0 - t_e);
  if (target < carried) {
    throw std::domain_error("renoise_transition: carried noise exceeds the target noise level");
  }
  return std::sqrt(target - carried);
}

Image renoise_transition(const Image& x_end, std::size_t from_stage,
                         const StageSchedule& schedule, double lambda, Rng& rng) {
  const double gamma = renoise_gamma(from_stage, schedule, lambda);
  const Image up = upsample(x_end, 2);
  const Image fresh = gaussian_image(up.channels, up.height, up.width, rng);
  return lincomb(lambda, up, gamma, fresh);
}

Image generate(const VelocityModel& model, ClassLabel label, const StageSchedule& schedule,
               const SampleConfig& config, std::size_t channels) {
  config.validate(schedule.stages());
  Rng rng(config.seed);
  const auto S = schedule.stages();
  const auto lowest = schedule.resolution(S - 1);
  Image x = gaussian_image(channels, lowest, lowest, rng);
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t s = S - 1 - k;
    const double w = stage_cfg_weight(s, schedule, config.cfg_max, config.cfg_fractions);
    if (config.solver == Solver::euler) {
      x = euler_stage(model, std::move(x), s, schedule, config.steps_per_stage, w, label);
    } else {
      x = dopri5_stage(model, std::move(x), s, schedule, config.atol, w, label);
    }
    if (s > 0) x = renoise_transition(x, s, schedule, config.renoise_lambda, rng);
  }
  return clamp(std::move(x), -1.0, 1.0);
}

}  // namespace pixelflow
