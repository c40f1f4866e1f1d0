#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cpnet/error.hpp"

namespace cpnet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node;

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;  // null for leaves
};

// One recorded operation. The backward closure reads the output gradient and
// accumulates into the gradients of whichever inputs require them.
template <class T>
struct Node {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::weak_ptr<TensorImpl<T>> output;
  std::function<void(std::span<const T>)> backward;
  bool consumed = false;
};

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

// Lazily allocates the gradient buffer of `t`.
template <class T>
std::span<T> grad_buffer(TensorImpl<T>& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), T(0));
  return t.grad;
}

}  // namespace detail

// Disables graph recording in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return !detail::grad_disabled(); }

// Dense row-major array with optional gradient tracking. Copies share the
// underlying storage (handle semantics, as the autograd graph needs); use
// clone() for an independent copy.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    validate_shape(shape);
    impl_->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
    validate_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
      fail(ErrorKind::shape, "tensor of shape " + shape_str(shape) + " needs " +
                                 std::to_string(shape_numel(shape)) + " values, got " +
                                 std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t i) const { return shape().at(i); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl().data.size()); }

  std::span<T> data() { return impl().data; }
  std::span<const T> data() const { return impl().data; }

  T item() const {
    if (numel() != 1) fail(ErrorKind::shape, "item() on tensor of shape " + shape_str(shape()));
    return impl().data[0];
  }

  T& at(std::initializer_list<std::int64_t> index) { return impl().data[offset(index)]; }
  T at(std::initializer_list<std::int64_t> index) const { return impl().data[offset(index)]; }

  bool requires_grad() const { return impl().requires_grad; }

  Tensor& set_requires_grad(bool on) {
    if (!is_leaf()) fail(ErrorKind::state, "requires_grad can only be set on leaf tensors");
    impl().requires_grad = on;
    return *this;
  }

  bool is_leaf() const { return !impl().grad_fn; }
  bool has_grad() const { return !impl().grad.empty(); }

  std::span<const T> grad() const {
    if (!has_grad()) fail(ErrorKind::state, "tensor has no gradient");
    return impl().grad;
  }

  std::span<T> mutable_grad() { return detail::grad_buffer(impl()); }

  void zero_grad() {
    if (has_grad()) std::fill(impl().grad.begin(), impl().grad.end(), T(0));
  }

  void clear_grad() { impl().grad.clear(); }

  Tensor clone() const {
    Tensor copy(shape(), std::vector<T>(impl().data));
    copy.impl_->requires_grad = false;
    return copy;
  }

  // Same values, new leaf outside any graph.
  Tensor detach() const { return clone(); }

  Tensor reshaped(Shape new_shape) const;

  const std::shared_ptr<detail::TensorImpl<T>>& impl_ptr() const { return impl_; }

  static Tensor from_impl(std::shared_ptr<detail::TensorImpl<T>> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  detail::TensorImpl<T>& impl() const {
    if (!impl_) fail(ErrorKind::state, "use of an undefined tensor");
    return *impl_;
  }

  static void validate_shape(const Shape& shape) {
    for (auto d : shape) {
      if (d <= 0) fail(ErrorKind::shape, "tensor dims must be positive, got " + shape_str(shape));
    }
  }

  std::size_t offset(std::initializer_list<std::int64_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) {
      fail(ErrorKind::shape, "index rank " + std::to_string(index.size()) + " for tensor " + shape_str(s));
    }
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
      if (i < 0 || i >= s[axis]) fail(ErrorKind::value, "index out of range for tensor " + shape_str(s));
      flat = flat * s[axis] + i;
      ++axis;
    }
    return static_cast<std::size_t>(flat);
  }

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

// Creates the output of an operation and, when any input requires a gradient
// and recording is enabled, attaches a graph node with the given backward rule.
// `backward` receives the output gradient and must accumulate into the inputs
// (via detail::grad_buffer) that have requires_grad set.
template <class T, class Backward>
Tensor<T> record_op(std::string name, Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                    Backward&& backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
  if (!needs_grad) return out;

  auto node = std::make_shared<detail::Node<T>>();
  node->name = std::move(name);
  for (const auto& t : inputs) {
    if (t.defined()) node->inputs.push_back(t.impl_ptr());
  }
  node->output = out.impl_ptr();
  node->backward = std::forward<Backward>(backward);
  out.impl_ptr()->requires_grad = true;
  out.impl_ptr()->grad_fn = std::move(node);
  return out;
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    fail(ErrorKind::shape, "cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  auto src = impl_;
  return record_op<T>("reshape", std::move(new_shape), std::vector<T>(impl().data), {*this},
                      [src](std::span<const T> g) {
                        if (!src->requires_grad) return;
                        auto gx = detail::grad_buffer(*src);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      });
}

// Reverse-mode sweep from a scalar loss. Each graph can be traversed once:
// a second call on any part of an already-consumed graph is an error.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) fail(ErrorKind::state, "backward on an undefined tensor");
  if (loss.numel() != 1) {
    fail(ErrorKind::shape, "backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  const auto& root = loss.impl_ptr();
  if (!root->grad_fn) fail(ErrorKind::state, "loss was not produced by a recorded graph");
  if (root->grad_fn->consumed) fail(ErrorKind::state, "backward called twice on the same graph");

  // Iterative post-order DFS; `order` ends up with inputs before consumers.
  std::vector<detail::Node<T>*> order;
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> keep_alive;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{root->grad_fn.get(), 0}};
  visited.insert(root->grad_fn.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed) fail(ErrorKind::state, "backward reached a graph consumed by an earlier backward");
    if (next < node->inputs.size()) {
      const auto& input = node->inputs[next++];
      keep_alive.push_back(input);
      auto* child = input->grad_fn.get();
      if (child && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* node = *it;
    auto out = node->output.lock();
    if (out && !out->grad.empty()) node->backward(out->grad);
    // Intermediate gradients are not retained, mirroring common frameworks.
    if (out && out != root) out->grad.clear();
    node->consumed = true;
    node->backward = nullptr;
    node->inputs.clear();
  }
}

}  // namespace cpnet
