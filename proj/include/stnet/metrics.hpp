// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "stnet/tensor.hpp"

namespace stnet {

/// (1/B) * sum ||target - pred||^2, B = leading dimension.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& target, const Tensor<T>& pred);

inline constexpr double kNmseFloorDb = -300.0;

/// 10 log10(linear), floored.
double to_db(double linear);

struct NmseResult {
  double linear = 0.0;
  double db = kNmseFloorDb;
  std::size_t samples = 0;   // samples that entered the average
  std::size_t excluded = 0;  // zero-norm references skipped
};

/// Averages ||h - h_hat||^2 / ||h||^2 over samples in the order they are added.
class NmseAccumulator {
 public:
  void add(std::span<const double> h, std::span<const double> h_hat);
  /// Adds an already computed per-sample ratio; negative marks an excluded sample.
  void add_ratio(double ratio);
  NmseResult result() const;

 private:
  double sum_ = 0.0;
  std::size_t samples_ = 0;
  std::size_t excluded_ = 0;
};

/// Per-sample ratio, or -1 when ||h|| == 0.
double nmse_ratio(std::span<const double> h, std::span<const double> h_hat);

/// h and h_hat hold consecutive samples of `sample_size` values each.
NmseResult nmse(std::span<const double> h, std::span<const double> h_hat, std::size_t sample_size);

}  // namespace stnet
