// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stnet {

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& target, const Tensor<T>& pred) {
  if (target.shape() != pred.shape()) {
    throw ShapeError("mse_loss shape mismatch: " + shape_str(target.shape()) + " vs " + shape_str(pred.shape()));
  }
  if (target.rank() == 0 || target.dim(0) == 0) throw ShapeError("mse_loss needs a non-empty batch");
  auto diff = sub(pred, target);
  return scale(sum(mul(diff, diff)), T(1) / static_cast<T>(target.dim(0)));
}

template Tensor<float> mse_loss<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> mse_loss<long double>(const Tensor<long double>&, const Tensor<long double>&);

double to_db(double linear) {
  if (!(linear > 0.0)) return std::isnan(linear) ? linear : kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(linear));
}

double nmse_ratio(std::span<const double> h, std::span<const double> h_hat) {
  if (h.size() != h_hat.size()) throw std::invalid_argument("nmse sample sizes differ");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double e = h[i] - h_hat[i];
    err += e * e;
    ref += h[i] * h[i];
  }
  return ref > 0.0 ? err / ref : -1.0;
}

void NmseAccumulator::add(std::span<const double> h, std::span<const double> h_hat) {
  add_ratio(nmse_ratio(h, h_hat));
}

void NmseAccumulator::add_ratio(double ratio) {
  if (ratio < 0.0) {
    ++excluded_;
    return;
  }
  sum_ += ratio;
  ++samples_;
}

NmseResult NmseAccumulator::result() const {
  NmseResult r;
  r.samples = samples_;
  r.excluded = excluded_;
  r.linear = samples_ == 0 ? 0.0 : sum_ / static_cast<double>(samples_);
  r.db = to_db(r.linear);
  return r;
}

NmseResult nmse(std::span<const double> h, std::span<const double> h_hat, std::size_t sample_size) {
  if (sample_size == 0 || h.size() != h_hat.size() || h.size() % sample_size != 0) {
    throw std::invalid_argument("nmse inputs are not whole samples of equal count");
  }
  NmseAccumulator acc;
  for (std::size_t off = 0; off < h.size(); off += sample_size) {
    acc.add(h.subspan(off, sample_size), h_hat.subspan(off, sample_size));
  }
  return acc.result();
}

}  // namespace stnet
