// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Convolution, transposed convolution, linear and layer-norm ops with their
// layer wrappers, the parameter registry, and the Adam optimizer.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stnet/tensor.hpp"

namespace stnet {

using Rng = std::mt19937_64;

struct Padding {
  std::size_t h = 0;
  std::size_t w = 0;
};

struct ConvGeometry {
  std::size_t stride = 1;
  Padding pad;
};

/// Output extent of a cross-correlation: floor((in + 2*pad - k) / stride) + 1.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
/// Output extent of a transposed convolution: (in - 1) * stride - 2*pad + k.
std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// ---- ops --------------------------------------------------------------------

/// y = x W^T + b over the last axis. weight is [out, in]; an undefined bias is skipped.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Cross-correlation (no kernel flip). x [b, c, h, w], weight [o, c, kh, kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const ConvGeometry& geom);

/// Adjoint of conv2d with the same geometry. x [b, c, h, w], weight [c, o, kh, kw].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           const ConvGeometry& geom);

/// Per-token normalization over the last axis followed by gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double epsilon);

// ---- parameters -------------------------------------------------------------

template <typename T>
class ParamStore {
 public:
  Tensor<T> create(const std::string& name, Shape shape, const std::vector<double>& values);

  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  const Tensor<T>& find(const std::string& name) const;
  std::size_t total_count() const;

 private:
  std::vector<Tensor<T>> tensors_;
};

/// Kaiming-uniform draws, bound 1/sqrt(fan_in).
std::vector<double> kaiming_uniform(Rng& rng, std::size_t fan_in, std::size_t count);

// ---- layers -----------------------------------------------------------------

template <typename T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;
  ConvGeometry geom;

  static Conv2d create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kh, std::size_t kw, ConvGeometry geom, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, geom); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight;
  Tensor<T> bias;
  ConvGeometry geom;

  static ConvTranspose2d create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                                std::size_t kh, std::size_t kw, ConvGeometry geom, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return conv_transpose2d(x, weight, bias, geom); }
  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }
};

template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool bias = true);
  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
};

template <typename T>
struct LayerNorm {
  static constexpr double kEpsilon = 1e-5;

  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNorm create(ParamStore<T>& store, const std::string& name, std::size_t dim);
  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, kEpsilon); }
};

/// linear d->d, GELU, linear d->d
template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  static Mlp create(ParamStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
};

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  /// One bias-corrected update. Leaves missing from `grads` get a zero gradient.
  void step(const Gradients<T>& grads);
  void step(const std::vector<Tensor<T>>& grads);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  /// Reinstates saved state (checkpoint resume).
  void restore(std::uint64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

 private:
  void apply(std::size_t index, std::span<const T> grad);

  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace stnet
