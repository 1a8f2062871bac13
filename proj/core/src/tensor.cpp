#include "pixelflow/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace pixelflow {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool taped = false;
  std::uint64_t seq = 0;
  std::string_view op;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  bool on_tape() const { return requires_grad || taped; }
};

}  // namespace detail

namespace {

std::atomic<std::uint64_t> g_tape_clock{0};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> value) {
  if (shape_numel(shape) != value.size()) {
    std::ostringstream msg;
    msg << "tensor: shape " << shape_string(shape) << " holds "
        << shape_numel(shape) << " elements but " << value.size()
        << " values were given";
    throw ShapeError(msg.str());
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = g_tape_clock.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

ShapeError::ShapeError(std::string_view op, const Shape& a, const Shape& b)
    : std::invalid_argument(std::string(op) + ": shape mismatch " +
                            shape_string(a) + " vs " + shape_string(b)) {}

Tensor::Tensor() : Tensor(make_node({0}, {})) {}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  Tensor t(make_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: expected a single element, got " +
                     shape_string(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->on_tape(); }

void Tensor::set_requires_grad(bool on) {
  if (node_->taped) throw GradError("set_requires_grad: tensor is not a leaf");
  node_->requires_grad = on;
}

bool Tensor::is_taped() const { return node_->taped; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw GradError("backward: output must be a scalar, got shape " +
                    shape_string(shape()));
  }
  if (!node_->on_tape()) {
    throw GradError("backward: output is not on the differentiation tape");
  }

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs) {
      if (in->on_tape() && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  // Intermediate buffers are filled lazily by grad_in and released once the
  // node has propagated, so only leaves keep gradients afterwards.
  for (auto* n : order) {
    if (n->taped) std::vector<double>().swap(n->grad);
  }
  if (node_->grad.empty()) node_->grad.assign(1, 0.0);
  node_->grad[0] += 1.0;

  for (auto* n : order) {
    if (!n->backward || n->grad.empty()) continue;
    BackwardContext ctx(n->grad, n->value, *n);
    n->backward(ctx);
    std::vector<double>().swap(n->grad);
  }
}

Tensor Tensor::detach() const {
  return Tensor::from(node_->shape, node_->value, false);
}

BackwardContext::BackwardContext(std::span<const double> grad_out,
                                 std::span<const double> value_out,
                                 detail::Node& node)
    : grad_out_(grad_out), value_out_(value_out), node_(node) {}

bool BackwardContext::needs_grad(std::size_t input) const {
  return node_.inputs.at(input)->on_tape();
}

std::span<double> BackwardContext::grad_in(std::size_t input) const {
  auto& in = *node_.inputs.at(input);
  if (!in.on_tape()) return {};
  if (in.grad.size() != in.value.size()) in.grad.assign(in.value.size(), 0.0);
  return in.grad;
}

Tensor record_op(std::string_view op, Shape shape, std::vector<double> value,
                 std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(make_node(std::move(shape), std::move(value)));
  out.node_->op = op;
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->taped = true;
  out.node_->inputs.reserve(inputs.size());
  for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace pixelflow
