// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Spatially separable attention over an L x L token grid:
//
//   LSA  full multi-head attention inside each non-overlapping W x W window.
//   GSA  every token queries an m x m map (m = L / W) produced by a stride-W
//        convolution, one key/value token per window.
//
// Token tensors are channels-last: [batch, L, L, d].

#pragma once

#include <cstdint>
#include <string>

#include "stnet/layers.hpp"

namespace stnet {

struct AttentionConfig {
  std::size_t grid = 32;       // L
  std::size_t window = 8;      // W
  std::size_t embed_dim = 32;  // d
  std::size_t heads = 4;       // P

  std::size_t windows_per_side() const { return grid / window; }  // m
  std::size_t head_dim() const { return embed_dim / heads; }
  /// Throws std::invalid_argument unless L % W == 0 and d % P == 0.
  void validate() const;
};

/// Q/K/V and output projections. Head n owns output rows [n*d_head, (n+1)*d_head)
/// of each of the query, key and value weights. The key projection has no bias.
template <typename T>
struct MhaWeights {
  Linear<T> query;
  Linear<T> key;
  Linear<T> value;
  Linear<T> output;

  static MhaWeights create(ParamStore<T>& store, const std::string& name, std::size_t dim, Rng& rng);
};

template <typename T>
struct GsaWeights {
  Conv2d<T> subsample;  // W x W kernel, stride W, d -> d
  MhaWeights<T> attention;

  static GsaWeights create(ParamStore<T>& store, const std::string& name, const AttentionConfig& config, Rng& rng);
};

/// [b, L, L, d] -> [b*m*m, W*W, d], windows in row-major order.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t window);

/// Inverse of window_partition.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::size_t grid, std::size_t window);

/// Receives the softmax attention maps [B, P, Nq, Nk] when passed to an
/// attention call.
template <typename T>
struct AttentionProbe {
  Tensor<T> weights;
};

/// q [B, Nq, d]; k, v [B, Nk, d]. Per head: softmax(Q K^T / sqrt(d_head)) V,
/// heads concatenated, then the output projection.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const MhaWeights<T>& weights, std::size_t heads, AttentionProbe<T>* probe = nullptr);

template <typename T>
Tensor<T> lsa_forward(const Tensor<T>& x, const AttentionConfig& config, const MhaWeights<T>& weights,
                      AttentionProbe<T>* probe = nullptr);

template <typename T>
Tensor<T> gsa_forward(const Tensor<T>& x, const AttentionConfig& config, const GsaWeights<T>& weights,
                      AttentionProbe<T>* probe = nullptr);

/// Analytic per-sample multiply-accumulate counts of one LSA + GSA pair.
struct AttentionFlops {
  std::uint64_t lsa_score = 0;        // m^2 windows * (W^2)^2 * d
  std::uint64_t lsa_aggregate = 0;    // same as lsa_score
  std::uint64_t gsa_score = 0;        // L^2 * m^2 * d
  std::uint64_t gsa_aggregate = 0;    // same as gsa_score
  std::uint64_t lsa_projections = 0;  // Q, K, V, output on L^2 tokens
  std::uint64_t gsa_projections = 0;  // Q, output on L^2 tokens; K, V on m^2 tokens
  std::uint64_t gsa_subsample = 0;    // stride-W conv: m^2 * W^2 * d * d
  std::uint64_t full_score = 0;       // global attention over all L^2 tokens: L^4 * d
  std::uint64_t full_aggregate = 0;
  std::uint64_t lsa_softmax_elements = 0;
  std::uint64_t gsa_softmax_elements = 0;

  std::uint64_t projections() const { return lsa_projections + gsa_projections + gsa_subsample; }
  std::uint64_t total_macs() const {
    return lsa_score + lsa_aggregate + gsa_score + gsa_aggregate + projections();
  }
  /// Measured LSA/full score ratio; 1/m^2 by direct counting.
  double lsa_to_full_ratio() const { return static_cast<double>(lsa_score) / static_cast<double>(full_score); }
};

AttentionFlops attention_flops(const AttentionConfig& config);

}  // namespace stnet
