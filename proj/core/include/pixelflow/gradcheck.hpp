#pragma once

#include <functional>
#include <span>

#include "pixelflow/tensor.hpp"

namespace pixelflow {

/// Central-difference gradient of a scalar function at `x`:
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element i.
/// Throws std::domain_error if f returns a non-finite value.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h);

/// Same estimate, perturbing `param` in place (and restoring it) around a
/// closure that evaluates the objective through whatever holds `param`.
/// Only the listed element indices are probed; an empty list probes all.
std::vector<double> finite_diff_grad_inplace(const std::function<double()>& f, Tensor& param,
                                             double h,
                                             std::span<const std::size_t> elements = {});

struct GradientComparison {
  double relative_error = 0.0;  // ||a - n|| / max(||a||, ||n||)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  bool passed(double tolerance) const { return relative_error < tolerance; }
};

/// Norm-relative discrepancy between an analytic and a numeric gradient.
/// Two gradients that are both below `zero_floor` in norm compare equal.
GradientComparison compare_gradients(std::span<const double> analytic,
                                     std::span<const double> numeric,
                                     double zero_floor = 1e-12);

}  // namespace pixelflow
