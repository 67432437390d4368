// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stnet/tensor.hpp"

namespace stnet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double worst_autodiff = 0.0;
  double worst_numeric = 0.0;
  std::size_t refined = 0;  // elements re-measured at higher precision
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

/// Central differences against autodiff for every element of every leaf.
/// `f` must rebuild its graph from the current leaf values on every call.
template <typename T>
GradCheckReport check_gradients(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> leaves, double eps);

/// Working-precision check: float32 autodiff gradient against float64 central
/// differences. The two leaf lists correspond index by index and must hold the
/// same (float-representable) values.
GradCheckReport check_gradients_mixed(const std::function<Tensor<float>()>& f32, std::vector<Tensor<float>> leaves32,
                                      const std::function<Tensor<double>()>& f64, std::vector<Tensor<double>> leaves64,
                                      double eps);

/// The same function built in double and long double, with leaf lists that
/// correspond index by index to the checked leaves.
struct RefinedReference {
  std::function<Tensor<double>()> f64;
  std::vector<Tensor<double>> leaves64;
  std::function<Tensor<long double>()> f80;
  std::vector<Tensor<long double>> leaves80;
};

/// Autodiff at precision A against double central differences. Elements whose
/// relative error exceeds `refine_above` are re-measured with a fourth-order
/// long double stencil, which resolves gradients far smaller than double
/// differences can; `refined` counts them.
template <typename A>
GradCheckReport check_gradients_refined(const std::function<Tensor<A>()>& f, std::vector<Tensor<A>> leaves,
                                        RefinedReference reference, double eps, double refine_above);

/// Single-input form: max relative error between autodiff and central
/// differences of the scalar function `f` at `x`.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x, double eps);

}  // namespace stnet
