#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pixelflow {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised when operand shapes do not conform. The message names the op and
/// both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const Shape& a, const Shape& b);
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Misuse of reverse-mode differentiation (non-scalar output, untaped tensor).
class GradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(const BackwardContext&)>;

/// Dense row-major float64 array. Copies are shallow handles onto the same
/// storage; the value is immutable once created except through
/// `mutable_data()`, which is reserved for initializers and optimizers.
///
/// A tensor participates in the differentiation tape when it requires grad or
/// was produced by an op with at least one such input. `backward()` walks the
/// tape from a scalar output in reverse creation order. Leaf gradients
/// accumulate across calls until `zero_grad()`; intermediate nodes hold a
/// gradient only while the backward pass runs.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  /// True when this tensor was produced by a recorded op.
  bool is_taped() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  void backward() const;

  /// Same values, detached from the tape, fresh storage.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;

  friend Tensor record_op(std::string_view, Shape, std::vector<double>,
                          std::vector<Tensor>, BackwardFn);
};

/// Handed to an op's backward function. Input gradients are accumulated, not
/// assigned.
class BackwardContext {
 public:
  BackwardContext(std::span<const double> grad_out,
                  std::span<const double> value_out, detail::Node& node);

  std::span<const double> grad_out() const { return grad_out_; }
  std::span<const double> value_out() const { return value_out_; }
  bool needs_grad(std::size_t input) const;
  /// Gradient buffer of input `i`; empty when the input is not on the tape.
  std::span<double> grad_in(std::size_t input) const;

 private:
  std::span<const double> grad_out_;
  std::span<const double> value_out_;
  detail::Node& node_;
};

/// Creates the result of an op. When grad mode is on and any input is on the
/// tape, the result is recorded together with `backward`; otherwise it is a
/// plain constant.
Tensor record_op(std::string_view op, Shape shape, std::vector<double> value,
                 std::vector<Tensor> inputs, BackwardFn backward);

bool grad_enabled();

/// Disables recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace pixelflow
