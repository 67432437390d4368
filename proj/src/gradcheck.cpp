// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stnet {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

template <typename T>
double central_difference(const std::function<Tensor<T>()>& f, Tensor<T>& leaf, std::size_t i, double eps) {
  NoGradGuard no_grad;
  auto values = leaf.mutable_values();
  const T original = values[i];
  const T hi = original + static_cast<T>(eps), lo = original - static_cast<T>(eps);
  values[i] = hi;
  const T up = f().item();
  values[i] = lo;
  const T down = f().item();
  values[i] = original;
  // Divide by the step actually taken after rounding.
  return static_cast<double>((up - down) / (hi - lo));
}

// Fourth-order central stencil: Richardson extrapolation of steps h and h/2.
template <typename T>
double richardson_difference(const std::function<Tensor<T>()>& f, Tensor<T>& leaf, std::size_t i, double h) {
  NoGradGuard no_grad;
  auto values = leaf.mutable_values();
  const T original = values[i];
  auto at = [&](T step) {
    values[i] = original + step;
    const T y = f().item();
    values[i] = original;
    return y;
  };
  const T step = static_cast<T>(h);
  const T wide = (at(step) - at(-step)) / (2 * step);
  const T narrow = (at(step / 2) - at(-step / 2)) / step;
  return static_cast<double>((4 * narrow - wide) / 3);
}

// Step of the long double stencil; its truncation and rounding errors are
// both far below double resolution here.
constexpr double kRefineStep = 1e-4;

void note(GradCheckReport& report, double analytic, double numeric, const std::string& leaf, std::size_t i) {
  const double err = relative_error(analytic, numeric);
  ++report.checked;
  if (err > report.max_rel_error || report.checked == 1) {
    report.max_rel_error = std::max(report.max_rel_error, err);
    report.worst_leaf = leaf;
    report.worst_index = i;
    report.worst_autodiff = analytic;
    report.worst_numeric = numeric;
  }
}

template <typename T>
std::vector<Tensor<T>> analytic_gradients(const std::function<Tensor<T>()>& f, const std::vector<Tensor<T>>& leaves) {
  auto grads = backward(f());
  std::vector<Tensor<T>> out;
  for (const auto& leaf : leaves) {
    out.push_back(grads.contains(leaf) ? grads.of(leaf) : Tensor<T>::zeros(leaf.shape()));
  }
  return out;
}

}  // namespace

template <typename T>
GradCheckReport check_gradients(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> leaves, double eps) {
  for (auto& leaf : leaves) leaf.set_requires_grad(true);
  const auto analytic = analytic_gradients(f, leaves);
  GradCheckReport report;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const std::string label = leaves[l].name().empty() ? "leaf" + std::to_string(l) : leaves[l].name();
    for (std::size_t i = 0; i < leaves[l].numel(); ++i) {
      const double numeric = central_difference(f, leaves[l], i, eps);
      note(report, static_cast<double>(analytic[l].at(i)), numeric, label, i);
    }
  }
  return report;
}

namespace {

template <typename A, typename N>
GradCheckReport mixed(const std::function<Tensor<A>()>& fa, std::vector<Tensor<A>> leaves_a,
                      const std::function<Tensor<N>()>& fn, std::vector<Tensor<N>> leaves_n, double eps) {
  if (leaves_a.size() != leaves_n.size()) throw std::invalid_argument("leaf lists differ in length");
  for (auto& leaf : leaves_a) leaf.set_requires_grad(true);
  const auto analytic = analytic_gradients(fa, leaves_a);
  GradCheckReport report;
  for (std::size_t l = 0; l < leaves_n.size(); ++l) {
    if (leaves_n[l].shape() != leaves_a[l].shape()) throw ShapeError("leaf shapes differ at index " + std::to_string(l));
    const std::string label = leaves_a[l].name().empty() ? "leaf" + std::to_string(l) : leaves_a[l].name();
    for (std::size_t i = 0; i < leaves_n[l].numel(); ++i) {
      const double numeric = central_difference(fn, leaves_n[l], i, eps);
      note(report, static_cast<double>(analytic[l].at(i)), numeric, label, i);
    }
  }
  return report;
}

}  // namespace

GradCheckReport check_gradients_mixed(const std::function<Tensor<float>()>& f32, std::vector<Tensor<float>> leaves32,
                                      const std::function<Tensor<double>()>& f64, std::vector<Tensor<double>> leaves64,
                                      double eps) {
  return mixed(f32, std::move(leaves32), f64, std::move(leaves64), eps);
}

template <typename A>
GradCheckReport check_gradients_refined(const std::function<Tensor<A>()>& f, std::vector<Tensor<A>> leaves,
                                        RefinedReference reference, double eps, double refine_above) {
  if (leaves.size() != reference.leaves64.size() || leaves.size() != reference.leaves80.size()) {
    throw std::invalid_argument("leaf lists differ in length");
  }
  for (auto& leaf : leaves) leaf.set_requires_grad(true);
  const auto analytic = analytic_gradients(f, leaves);
  GradCheckReport report;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    if (reference.leaves64[l].shape() != leaves[l].shape() || reference.leaves80[l].shape() != leaves[l].shape()) {
      throw ShapeError("leaf shapes differ at index " + std::to_string(l));
    }
    const std::string label = leaves[l].name().empty() ? "leaf" + std::to_string(l) : leaves[l].name();
    for (std::size_t i = 0; i < leaves[l].numel(); ++i) {
      const double a = static_cast<double>(analytic[l].at(i));
      double numeric = central_difference(reference.f64, reference.leaves64[l], i, eps);
      if (relative_error(a, numeric) > refine_above) {
        numeric = richardson_difference(reference.f80, reference.leaves80[l], i, kRefineStep);
        ++report.refined;
      }
      note(report, a, numeric, label, i);
    }
  }
  return report;
}

template GradCheckReport check_gradients_refined<float>(const std::function<Tensor<float>()>&,
                                                        std::vector<Tensor<float>>, RefinedReference, double, double);
template GradCheckReport check_gradients_refined<double>(const std::function<Tensor<double>()>&,
                                                         std::vector<Tensor<double>>, RefinedReference, double,
                                                         double);

template <typename T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x, double eps) {
  Tensor<T> leaf(x.shape(), std::vector<T>(x.values().begin(), x.values().end()));
  leaf.set_requires_grad(true);
  std::function<Tensor<T>()> g = [&]() { return f(leaf); };
  return check_gradients<T>(g, {leaf}, eps).max_rel_error;
}

template GradCheckReport check_gradients<float>(const std::function<Tensor<float>()>&, std::vector<Tensor<float>>,
                                                double);
template GradCheckReport check_gradients<double>(const std::function<Tensor<double>()>&,
                                                 std::vector<Tensor<double>>, double);
template double finite_diff_check<float>(const std::function<Tensor<float>(const Tensor<float>&)>&,
                                         const Tensor<float>&, double);
template double finite_diff_check<double>(const std::function<Tensor<double>(const Tensor<double>&)>&,
                                          const Tensor<double>&, double);

}  // namespace stnet
