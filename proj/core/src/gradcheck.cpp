#include "pixelflow/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pixelflow {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw std::domain_error("finite_diff_grad: objective returned a non-finite value");
  return v;
}

void require_step(double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
}

}  // namespace

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  require_step(h);
  std::vector<double> probe(x.data().begin(), x.data().end());
  std::vector<double> grad(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + h;
    const double up = checked(f(Tensor::from(x.shape(), probe)));
    probe[i] = x0 - h;
    const double down = checked(f(Tensor::from(x.shape(), probe)));
    probe[i] = x0;
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor::from(x.shape(), std::move(grad));
}

std::vector<double> finite_diff_grad_inplace(const std::function<double()>& f, Tensor& param,
                                             double h, std::span<const std::size_t> elements) {
  require_step(h);
  auto w = param.mutable_data();
  std::vector<std::size_t> all;
  if (elements.empty()) {
    all.resize(w.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    elements = all;
  }
  std::vector<double> grad;
  grad.reserve(elements.size());
  for (auto i : elements) {
    const double x0 = w[i];
    w[i] = x0 + h;
    const double up = f();
    w[i] = x0 - h;
    const double down = f();
    w[i] = x0;
    grad.push_back((checked(up) - checked(down)) / (2.0 * h));
  }
  return grad;
}

GradientComparison compare_gradients(std::span<const double> analytic,
                                     std::span<const double> numeric, double zero_floor) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("compare_gradients: " + std::to_string(analytic.size()) + " vs " +
                     std::to_string(numeric.size()) + " elements");
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  GradientComparison c;
  c.analytic_norm = std::sqrt(na);
  c.numeric_norm = std::sqrt(nn);
  const double denom = std::max(c.analytic_norm, c.numeric_norm);
  c.relative_error = denom < zero_floor ? 0.0 : std::sqrt(diff) / denom;
  if (!std::isfinite(c.relative_error)) c.relative_error = INFINITY;
  return c;
}

}  // namespace pixelflow
