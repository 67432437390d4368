// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stnet/mac_counter.hpp"

namespace stnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

thread_local bool g_grad_enabled = true;
thread_local MacCounter* g_counter = nullptr;

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

// ---- MacCounter -------------------------------------------------------------

MacCounter::MacCounter() : previous_(g_counter) { g_counter = this; }
MacCounter::~MacCounter() { g_counter = previous_; }

std::uint64_t MacCounter::total() const {
  std::uint64_t t = 0;
  for (const auto& [label, n] : macs_) t += n;
  return t;
}

std::uint64_t MacCounter::total_under(const std::string& prefix) const {
  std::uint64_t t = 0;
  for (const auto& [label, n] : macs_) {
    if (label.compare(0, prefix.size(), prefix) == 0) t += n;
  }
  return t;
}

void MacCounter::record(std::uint64_t macs) {
  if (g_counter == nullptr) return;
  g_counter->macs_[current_label()] += macs;
}

std::string MacCounter::current_label() {
  if (g_counter == nullptr) return {};
  std::string out;
  for (const auto& l : g_counter->labels_) {
    if (!out.empty()) out += '/';
    out += l;
  }
  return out;
}

MacLabel::MacLabel(const std::string& component) {
  if (g_counter != nullptr) {
    g_counter->labels_.push_back(component);
    pushed_ = true;
  }
}

MacLabel::~MacLabel() {
  if (pushed_ && g_counter != nullptr) g_counter->labels_.pop_back();
}

// ---- Tensor -----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  }
  for (auto e : shape) {
    if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->seq = detail::next_sequence();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::parameter(std::string name, Shape shape, std::vector<T> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->name = std::move(name);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!node_->is_leaf) throw std::logic_error("mutable_values() on a non-leaf tensor");
  return node_->value;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::set_name(std::string name) {
  node_->name = std::move(name);
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> rule) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.is_leaf = false;
  node.parents.reserve(inputs.size());
  for (const auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::move(rule);
  return out;
}

// ---- Tape / backward --------------------------------------------------------

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  std::vector<std::shared_ptr<detail::Node<T>>> stack{root.node()};
  std::unordered_map<const detail::Node<T>*, bool> seen;
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || seen[n.get()]) continue;
    seen[n.get()] = true;
    if (n->is_leaf) {
      tape.leaves_.push_back(n);
      continue;
    }
    tape.ops_.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  auto by_seq = [](const auto& a, const auto& b) { return a->seq < b->seq; };
  std::sort(tape.ops_.begin(), tape.ops_.end(), by_seq);
  std::sort(tape.leaves_.begin(), tape.leaves_.end(), by_seq);
  return tape;
}

template <typename T>
bool Gradients<T>::contains(const Tensor<T>& leaf) const {
  return grads_.count(leaf.node().get()) != 0;
}

template <typename T>
const Tensor<T>& Gradients<T>::of(const Tensor<T>& leaf) const {
  auto it = grads_.find(leaf.node().get());
  if (it == grads_.end()) {
    throw std::out_of_range("no gradient recorded for leaf '" + leaf.name() + "'");
  }
  return it->second;
}

template <typename T>
std::map<std::string, Tensor<T>> Gradients<T>::by_name() const {
  return named_;
}

template <typename T>
void Gradients<T>::insert(const std::shared_ptr<detail::Node<T>>& leaf, Tensor<T> grad) {
  if (!leaf->name.empty()) named_[leaf->name] = grad;
  grads_[leaf.get()] = std::move(grad);
}

template <typename T>
Gradients<T> backward(const Tensor<T>& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " + shape_str(root.shape()));
  }
  Gradients<T> result;
  if (!root.requires_grad()) return result;
  auto tape = Tape<T>::record(root);
  for (auto& leaf : tape.leaves()) leaf->grad.clear();
  for (auto& op : tape.ops()) op->grad.clear();
  root.node()->grad_buffer()[0] = T(1);
  const auto& ops = tape.ops();
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    auto& node = **it;
    if (!node.grad.empty() && node.backward) node.backward(node);
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
  for (const auto& leaf : tape.leaves()) {
    auto g = leaf->grad.empty() ? std::vector<T>(leaf->value.size(), T(0)) : std::move(leaf->grad);
    leaf->grad.clear();
    result.insert(leaf, Tensor<T>(leaf->shape, std::move(g)));
  }
  return result;
}

// ---- matmul -----------------------------------------------------------------

namespace {

struct BatchPlan {
  Shape out_batch;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

BatchPlan plan_batches(const Shape& a, const Shape& b) {
  const std::size_t ra = a.size() - 2, rb = b.size() - 2;
  const std::size_t r = std::max(ra, rb);
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.begin() + ra, pa.begin() + (r - ra));
  std::copy(b.begin(), b.begin() + rb, pb.begin() + (r - rb));
  BatchPlan plan;
  plan.out_batch.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError("matmul batch mismatch: " + shape_str(a) + " x " + shape_str(b));
    }
    plan.out_batch[i] = std::max(pa[i], pb[i]);
  }
  const std::size_t n = shape_numel(plan.out_batch);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t ai = 0, bi = 0;
    for (std::size_t i = 0; i < r; ++i) {
      ai = ai * pa[i] + (pa[i] == 1 ? 0 : idx[i]);
      bi = bi * pb[i] + (pb[i] == 1 ? 0 : idx[i]);
    }
    plan.a_index[flat] = ai;
    plan.b_index[flat] = bi;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < plan.out_batch[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.shape()[a.rank() - 1] != b.shape()[b.rank() - 2]) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t p = a.shape()[a.rank() - 2], q = a.shape()[a.rank() - 1], r = b.shape()[b.rank() - 1];
  auto plan = std::make_shared<BatchPlan>(plan_batches(a.shape(), b.shape()));
  const std::size_t batches = plan->a_index.size();
  std::vector<T> out(batches * p * r);
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::size_t k = 0; k < batches; ++k) {
    MutMap<T>(out.data() + k * p * r, p, r).noalias() =
        ConstMap<T>(av + plan->a_index[k] * p * q, p, q) * ConstMap<T>(bv + plan->b_index[k] * q * r, q, r);
  }
  MacCounter::record(static_cast<std::uint64_t>(batches) * p * q * r);
  Shape shape = plan->out_batch;
  shape.push_back(p);
  shape.push_back(r);
  return make_result<T>(std::move(shape), std::move(out), {a, b}, [plan, p, q, r](detail::Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const std::size_t batches = plan->a_index.size();
    for (std::size_t k = 0; k < batches; ++k) {
      ConstMap<T> dc(self.grad.data() + k * p * r, p, r);
      if (na.requires_grad) {
        MutMap<T>(na.grad_buffer().data() + plan->a_index[k] * p * q, p, q).noalias() +=
            dc * ConstMap<T>(nb.value.data() + plan->b_index[k] * q * r, q, r).transpose();
      }
      if (nb.requires_grad) {
        MutMap<T>(nb.grad_buffer().data() + plan->b_index[k] * q * r, q, r).noalias() +=
            ConstMap<T>(na.value.data() + plan->a_index[k] * p * q, p, q).transpose() * dc;
      }
    }
  });
}

// ---- elementwise ------------------------------------------------------------

namespace {

enum class Broadcast { None, LeftScalar, RightScalar };

template <typename T>
Broadcast check_binary(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.numel() == 1) return Broadcast::LeftScalar;
  if (b.numel() == 1) return Broadcast::RightScalar;
  throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void accumulate_broadcast(detail::Node<T>& target, bool is_scalar, const std::vector<T>& grad, T factor) {
  if (!target.requires_grad) return;
  auto& g = target.grad_buffer();
  if (is_scalar) {
    T s = 0;
    for (auto v : grad) s += v;
    g[0] += factor * s;
  } else {
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] += factor * grad[i];
  }
}

template <typename T>
Tensor<T> add_or_sub(const Tensor<T>& a, const Tensor<T>& b, T sign, const char* op) {
  const auto mode = check_binary(a, b, op);
  const Shape shape = mode == Broadcast::LeftScalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  std::vector<T> out(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = mode == Broadcast::LeftScalar ? av[0] : av[i];
    const T y = mode == Broadcast::RightScalar ? bv[0] : bv[i];
    out[i] = x + sign * y;
  }
  return make_result<T>(shape, std::move(out), {a, b}, [mode, sign](detail::Node<T>& self) {
    accumulate_broadcast(*self.parents[0], mode == Broadcast::LeftScalar, self.grad, T(1));
    accumulate_broadcast(*self.parents[1], mode == Broadcast::RightScalar, self.grad, sign);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return add_or_sub(a, b, T(1), "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add_or_sub(a, b, T(-1), "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto mode = check_binary(a, b, "mul");
  const Shape shape = mode == Broadcast::LeftScalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  std::vector<T> out(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (mode == Broadcast::LeftScalar ? av[0] : av[i]) * (mode == Broadcast::RightScalar ? bv[0] : bv[i]);
  }
  return make_result<T>(shape, std::move(out), {a, b}, [mode](detail::Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const std::size_t n = self.grad.size();
    auto x = [&](std::size_t i) { return mode == Broadcast::LeftScalar ? na.value[0] : na.value[i]; };
    auto y = [&](std::size_t i) { return mode == Broadcast::RightScalar ? nb.value[0] : nb.value[i]; };
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[mode == Broadcast::LeftScalar ? 0 : i] += self.grad[i] * y(i);
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[mode == Broadcast::RightScalar ? 0 : i] += self.grad[i] * x(i);
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {a}, [factor](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[i];
    if (x >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
  return make_result<T>(a.shape(), std::move(out), {a}, [inv_sqrt2](detail::Node<T>& self) {
    auto& parent = *self.parents[0];
    auto& g = parent.grad_buffer();
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * T(M_PI));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = parent.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = std::exp(T(-0.5) * x * x) * inv_sqrt_2pi;
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

// ---- softmax / reductions ---------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const auto& s = x.shape();
  const std::size_t n = s[ax];
  const std::size_t inner = shape_numel(Shape(s.begin() + ax + 1, s.end()));
  const std::size_t outer = x.numel() / (n * inner);
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      T total = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] *= inv;
    }
  }
  return make_result<T>(s, std::move(out), {x}, [outer, n, inner](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        T dot = 0;
        for (std::size_t k = 0; k < n; ++k) dot += self.grad[base + k * inner] * self.value[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t j = base + k * inner;
          g[j] += self.value[j] * (self.grad[j] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (auto v : x.values()) total += v;
  return make_result<T>(Shape{1}, {total}, {x}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---- layout -----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace {

// For every output flat index, the matching input flat index.
std::vector<std::size_t> permute_map(const Shape& in, const std::vector<std::size_t>& axes, Shape& out_shape) {
  const std::size_t r = in.size();
  if (axes.size() != r) throw ShapeError("permute axes do not match rank of " + shape_str(in));
  std::vector<bool> used(r, false);
  for (auto a : axes) {
    if (a >= r || used[a]) throw ShapeError("permute axes are not a permutation for " + shape_str(in));
    used[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  out_shape.resize(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  const std::size_t n = shape_numel(in);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    map[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      src += stride[i];
      if (++idx[i] < out_shape[i]) break;
      src -= stride[i] * out_shape[i];
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  Shape out_shape;
  auto map = std::make_shared<std::vector<std::size_t>>(permute_map(x.shape(), axes, out_shape));
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*map)[i]];
  return make_result<T>(std::move(out_shape), std::move(out), {x}, [map](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*map)[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat shape mismatch: " + shape_str(first) + " vs " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = shape_numel(Shape(first.begin(), first.begin() + axis));
  const std::size_t inner = shape_numel(Shape(first.begin() + axis + 1, first.end()));
  std::vector<std::size_t> chunk;
  for (const auto& p : parts) chunk.push_back(p.shape()[axis] * inner);
  const std::size_t row = out_shape[axis] * inner;
  std::vector<T> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * row;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto pv = parts[k].values();
      std::copy_n(pv.begin() + o * chunk[k], chunk[k], out.begin() + offset);
      offset += chunk[k];
    }
  }
  return make_result<T>(std::move(out_shape), std::move(out), parts, [outer, chunk, row](detail::Node<T>& self) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t offset = o * row;
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        auto& parent = *self.parents[k];
        if (parent.requires_grad) {
          auto& g = parent.grad_buffer();
          for (std::size_t i = 0; i < chunk[k]; ++i) g[o * chunk[k] + i] += self.grad[offset + i];
        }
        offset += chunk[k];
      }
    }
  });
}

// ---- instantiations ---------------------------------------------------------

#define STNET_INSTANTIATE(T)                                                                               \
  template class Tensor<T>;                                                                                \
  template class Tape<T>;                                                                                  \
  template class Gradients<T>;                                                                             \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, const std::vector<Tensor<T>>&,                  \
                                    std::function<void(detail::Node<T>&)>);                                \
  template Gradients<T> backward<T>(const Tensor<T>&);                                                     \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                        \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                         \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                            \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                                    \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                             \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                            \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);                       \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)
STNET_INSTANTIATE(long double)

#undef STNET_INSTANTIATE

}  // namespace stnet
