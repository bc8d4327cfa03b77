#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lama {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised whenever a primitive produces NaN/Inf or a gradient is non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class Tensor;
struct Node;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
  std::vector<double> grad;  // leaf accumulator used by backward()
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : prev_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = enabled;
  }
  ~GradModeGuard() { detail::grad_mode_flag() = prev_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

/// Dense row-major array of doubles. Copies share storage; leaves may be
/// updated in place by optimizers, graph outputs are treated as immutable.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : impl_(std::make_shared<detail::TensorImpl>()) {
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
    if (values.size() != shape_numel(shape))
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> values() const { return impl_->data; }
  // Mutable access; intended for leaves and freshly built tensors only.
  std::span<double> mutable_values() { return impl_->data; }
  const double* data() const { return impl_->data.data(); }
  double* mutable_data() { return impl_->data.data(); }

  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    const auto& s = impl_->shape;
    return impl_->data[((b * s[1] + c) * s[2] + h) * s[3] + w];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (impl_->grad_fn) throw GraphError("set_requires_grad on a non-leaf tensor");
    impl_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return !impl_->grad_fn; }
  const Node* grad_fn() const { return impl_->grad_fn.get(); }

  // Leaf gradient accumulated by backward(); empty until the first call.
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  // Same values, no history, no gradient tracking.
  Tensor detach() const { return Tensor(impl_->shape, impl_->data); }

  Tensor clone() const { return detach(); }

  const detail::TensorImpl* id() const { return impl_.get(); }

 private:
  friend Tensor make_result(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                            std::function<std::vector<Tensor>(const Tensor&, const std::vector<bool>&)>,
                            bool);
  friend class Engine;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// One recorded operation. Backward maps the output gradient to one gradient
/// per input (undefined tensors for inputs that were not requested).
struct Node {
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor&, const std::vector<bool>&)>;
  const char* name = "";
  std::vector<Tensor> inputs;
  BackwardFn backward;
  // False when the backward pass is built from constants and cannot itself be
  // differentiated (create_graph through such a node is rejected).
  bool twice_differentiable = true;
};

inline void check_finite(std::span<const double> v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
}

/// Wraps freshly computed values as the output of `op`, recording a graph node
/// when grad mode is on and any input tracks gradients.
inline Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                          std::vector<Tensor> inputs, Node::BackwardFn backward,
                          bool twice_differentiable = true) {
  check_finite(values, op);
  Tensor out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool track = false;
  for (const auto& in : inputs) track = track || in.requires_grad();
  if (!track) return out;
  auto node = std::make_shared<Node>();
  node->name = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->twice_differentiable = twice_differentiable;
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(node);
  return out;
}

}  // namespace lama
