// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with define-by-run reverse-mode autodiff.
//
// Every op that sees an input with requires_grad records its output node
// together with a local gradient rule. backward() collects the nodes reachable
// from a scalar root into a Tape ordered by creation (which is a topological
// order, since inputs always exist before the ops that consume them) and walks
// it in reverse.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace stnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t seq = 0;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_sequence();

}  // namespace detail

/// Thread-local switch for op recording. Recording is on by default.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);
  /// A named leaf that participates in gradient computation.
  static Tensor parameter(std::string name, Shape shape, std::vector<T> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> values() const { return node_->value; }
  T at(std::size_t flat_index) const { return node_->value.at(flat_index); }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  const std::string& name() const { return node_->name; }

  /// Writable view of a leaf's storage (optimizer updates, gradient checks).
  std::span<T> mutable_values();
  Tensor& set_requires_grad(bool on);
  Tensor& set_name(std::string name);

  /// Same values, cut from any graph.
  Tensor detach() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(node_->value[i]);
    return Tensor<U>(shape(), std::move(out));
  }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Builds an op output. When recording is enabled and any input requires a
/// gradient, the output joins the graph with `rule` as its local gradient rule.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> rule);

/// Ordered record of the ops reachable from a root, in execution order.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  std::size_t size() const { return ops_.size(); }
  const std::vector<std::shared_ptr<detail::Node<T>>>& ops() const { return ops_; }
  const std::vector<std::shared_ptr<detail::Node<T>>>& leaves() const { return leaves_; }

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> ops_;
  std::vector<std::shared_ptr<detail::Node<T>>> leaves_;
};

template <typename T>
class Gradients {
 public:
  bool contains(const Tensor<T>& leaf) const;
  /// Gradient of a leaf; throws std::out_of_range if the leaf was not reached.
  const Tensor<T>& of(const Tensor<T>& leaf) const;
  std::map<std::string, Tensor<T>> by_name() const;
  std::size_t size() const { return grads_.size(); }

  void insert(const std::shared_ptr<detail::Node<T>>& leaf, Tensor<T> grad);

 private:
  std::unordered_map<const detail::Node<T>*, Tensor<T>> grads_;
  std::map<std::string, Tensor<T>> named_;
};

/// Reverse pass from a scalar root. Intermediate gradient buffers are released
/// afterwards, so a graph can be differentiated once.
template <typename T>
Gradients<T> backward(const Tensor<T>& root);

// ---- ops --------------------------------------------------------------------

/// Batched matrix product over the last two axes; leading axes broadcast from 1.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
/// Exact GELU: x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// Scalar helpers used by the ops and by test oracles.
double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace stnet
