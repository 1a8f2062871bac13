#include "pixelflow/optim.hpp"

#include <algorithm>
#include <cmath>

namespace pixelflow {

namespace {

void check_layout(std::span<const NamedTensor> params,
                  const std::vector<std::vector<double>>& buffers, const char* what) {
  if (buffers.size() != params.size()) {
    throw std::invalid_argument(std::string(what) + ": holds " + std::to_string(buffers.size()) +
                                " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (buffers[i].size() != params[i].tensor.numel()) {
      throw ShapeError(std::string(what) + ": buffer for '" + params[i].name +
                       "' does not match shape " + shape_string(params[i].tensor.shape()));
    }
  }
}

}  // namespace

OptimizerState OptimizerState::init(std::span<const NamedTensor> params, AdamWConfig hyper) {
  OptimizerState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.numel(), 0.0);
    s.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_update(std::span<NamedTensor> params, OptimizerState& state) {
  check_layout(params, state.first_moment, "adamw_update");
  check_layout(params, state.second_moment, "adamw_update");
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("adamw_update: non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  const auto& hp = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  const double decay = 1.0 - hp.lr * hp.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_data();
    auto g = params[i].tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] = w[j] * decay - hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

EmaShadow EmaShadow::init(std::span<const NamedTensor> params) {
  EmaShadow e;
  for (const auto& p : params) e.values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return e;
}

void EmaShadow::update(std::span<const NamedTensor> params, double decay) {
  check_layout(params, values, "ema_update");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    auto& s = values[i];
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = decay * s[j] + (1.0 - decay) * w[j];
  }
}

void EmaShadow::copy_to(std::span<NamedTensor> params) const {
  check_layout(params, values, "ema_copy");
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i].tensor.mutable_data().begin());
  }
}

}  // namespace pixelflow
