// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "stnet/mac_counter.hpp"

namespace stnet {

void AttentionConfig::validate() const {
  if (grid == 0 || window == 0 || embed_dim == 0 || heads == 0) {
    throw std::invalid_argument("attention config extents must be positive");
  }
  if (grid % window != 0) {
    throw std::invalid_argument("grid " + std::to_string(grid) + " is not divisible by window " +
                                std::to_string(window));
  }
  if (embed_dim % heads != 0) {
    throw std::invalid_argument("embed dim " + std::to_string(embed_dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
}

template <typename T>
MhaWeights<T> MhaWeights<T>::create(ParamStore<T>& store, const std::string& name, std::size_t dim, Rng& rng) {
  MhaWeights w;
  w.query = Linear<T>::create(store, name + ".query", dim, dim, rng);
  // No key bias: it adds q.b to every score in a softmax row, which cancels.
  w.key = Linear<T>::create(store, name + ".key", dim, dim, rng, false);
  w.value = Linear<T>::create(store, name + ".value", dim, dim, rng);
  w.output = Linear<T>::create(store, name + ".output", dim, dim, rng);
  return w;
}

template <typename T>
GsaWeights<T> GsaWeights<T>::create(ParamStore<T>& store, const std::string& name, const AttentionConfig& config,
                                    Rng& rng) {
  GsaWeights w;
  const std::size_t d = config.embed_dim, win = config.window;
  w.subsample = Conv2d<T>::create(store, name + ".subsample", d, d, win, win, ConvGeometry{win, {}}, rng);
  w.attention = MhaWeights<T>::create(store, name + ".attention", d, rng);
  return w;
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t window) {
  if (x.rank() != 4 || x.dim(1) != x.dim(2)) {
    throw ShapeError("window_partition expects [b, L, L, d], got " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), grid = x.dim(1), d = x.dim(3);
  if (window == 0 || grid % window != 0) {
    throw ShapeError("grid " + std::to_string(grid) + " is not divisible by window " + std::to_string(window));
  }
  const std::size_t m = grid / window;
  auto tiles = permute(reshape(x, {b, m, window, m, window, d}), {0, 1, 3, 2, 4, 5});
  return reshape(tiles, {b * m * m, window * window, d});
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::size_t grid, std::size_t window) {
  if (windows.rank() != 3 || window == 0 || grid % window != 0 || windows.dim(1) != window * window) {
    throw ShapeError("window_merge cannot rebuild a " + std::to_string(grid) + "-grid from " +
                     shape_str(windows.shape()));
  }
  const std::size_t m = grid / window;
  if (windows.dim(0) % (m * m) != 0) {
    throw ShapeError("window count " + std::to_string(windows.dim(0)) + " is not a multiple of " +
                     std::to_string(m * m));
  }
  const std::size_t b = windows.dim(0) / (m * m), d = windows.dim(2);
  auto grid6 = permute(reshape(windows, {b, m, m, window, window, d}), {0, 1, 3, 2, 4, 5});
  return reshape(grid6, {b, grid, grid, d});
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const MhaWeights<T>& weights, std::size_t heads, AttentionProbe<T>* probe) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw ShapeError("attention expects [B, N, d] tokens, got " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t batch = q.dim(0), nq = q.dim(1), nk = k.dim(1), d = q.dim(2);
  if (k.dim(0) != batch || v.dim(0) != batch || k.dim(2) != d || v.dim(2) != d || v.dim(1) != nk) {
    throw ShapeError("attention token mismatch: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                     ", v " + shape_str(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("embed dim " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;

  auto project = [&](const Linear<T>& layer, const Tensor<T>& x, const char* label) {
    MacLabel scope(label);
    return layer.forward(x);
  };
  // [B, N, d] -> [B, P, N, dh]
  // The 1/sqrt(dh) factor is applied to Q, which is far smaller than the score map.
  auto Q = permute(reshape(scale(project(weights.query, q, "query"), T(1) / std::sqrt(static_cast<T>(dh))),
                           {batch, nq, heads, dh}),
                   {0, 2, 1, 3});
  auto Kt = permute(reshape(project(weights.key, k, "key"), {batch, nk, heads, dh}), {0, 2, 3, 1});
  auto V = permute(reshape(project(weights.value, v, "value"), {batch, nk, heads, dh}), {0, 2, 1, 3});

  Tensor<T> scores;
  {
    MacLabel scope("score");
    scores = matmul(Q, Kt);
  }
  auto attn = softmax(scores, -1);
  if (probe != nullptr) probe->weights = attn;
  Tensor<T> mixed;
  {
    MacLabel scope("aggregate");
    mixed = matmul(attn, V);
  }
  auto concatenated = reshape(permute(mixed, {0, 2, 1, 3}), {batch, nq, d});
  return project(weights.output, concatenated, "output");
}

template <typename T>
Tensor<T> lsa_forward(const Tensor<T>& x, const AttentionConfig& config, const MhaWeights<T>& weights,
                      AttentionProbe<T>* probe) {
  config.validate();
  if (x.rank() != 4 || x.dim(1) != config.grid || x.dim(2) != config.grid || x.dim(3) != config.embed_dim) {
    throw ShapeError("lsa input " + shape_str(x.shape()) + " does not match grid " + std::to_string(config.grid) +
                     ", embed dim " + std::to_string(config.embed_dim));
  }
  MacLabel scope("lsa");
  auto tokens = window_partition(x, config.window);
  auto mixed = multi_head_attention(tokens, tokens, tokens, weights, config.heads, probe);
  return window_merge(mixed, config.grid, config.window);
}

template <typename T>
Tensor<T> gsa_forward(const Tensor<T>& x, const AttentionConfig& config, const GsaWeights<T>& weights,
                      AttentionProbe<T>* probe) {
  config.validate();
  const std::size_t grid = config.grid, d = config.embed_dim, m = config.windows_per_side();
  if (x.rank() != 4 || x.dim(1) != grid || x.dim(2) != grid || x.dim(3) != d) {
    throw ShapeError("gsa input " + shape_str(x.shape()) + " does not match grid " + std::to_string(grid) +
                     ", embed dim " + std::to_string(d));
  }
  const std::size_t batch = x.dim(0);
  MacLabel scope("gsa");
  Tensor<T> summary;
  {
    MacLabel conv_scope("subsample");
    summary = weights.subsample.forward(permute(x, {0, 3, 1, 2}));
  }
  if (summary.dim(1) != d || summary.dim(2) != m || summary.dim(3) != m) {
    throw ShapeError("gsa sub-sampling produced " + shape_str(summary.shape()) + ", expected an " +
                     std::to_string(m) + "x" + std::to_string(m) + " map of " + std::to_string(d) + " channels");
  }
  auto kv = reshape(permute(summary, {0, 2, 3, 1}), {batch, m * m, d});
  auto queries = reshape(x, {batch, grid * grid, d});
  auto mixed = multi_head_attention(queries, kv, kv, weights.attention, config.heads, probe);
  return reshape(mixed, {batch, grid, grid, d});
}

AttentionFlops attention_flops(const AttentionConfig& config) {
  config.validate();
  const std::uint64_t L = config.grid, W = config.window, m = config.windows_per_side();
  const std::uint64_t d = config.embed_dim, P = config.heads;
  const std::uint64_t tokens = L * L;
  AttentionFlops f;
  f.lsa_score = m * m * (W * W) * (W * W) * d;
  f.lsa_aggregate = f.lsa_score;
  f.gsa_score = tokens * m * m * d;
  f.gsa_aggregate = f.gsa_score;
  f.lsa_projections = 4 * tokens * d * d;
  f.gsa_projections = 2 * tokens * d * d + 2 * m * m * d * d;
  f.gsa_subsample = m * m * (W * W * d) * d;
  f.full_score = tokens * tokens * d;
  f.full_aggregate = f.full_score;
  f.lsa_softmax_elements = P * m * m * (W * W) * (W * W);
  f.gsa_softmax_elements = P * tokens * m * m;
  return f;
}

#define STNET_INSTANTIATE(T)                                                                                   \
  template struct MhaWeights<T>;                                                                               \
  template struct GsaWeights<T>;                                                                               \
  template Tensor<T> window_partition<T>(const Tensor<T>&, std::size_t);                                       \
  template Tensor<T> window_merge<T>(const Tensor<T>&, std::size_t, std::size_t);                              \
  template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                             const MhaWeights<T>&, std::size_t, AttentionProbe<T>*);           \
  template Tensor<T> lsa_forward<T>(const Tensor<T>&, const AttentionConfig&, const MhaWeights<T>&,            \
                                    AttentionProbe<T>*);                                                       \
  template Tensor<T> gsa_forward<T>(const Tensor<T>&, const AttentionConfig&, const GsaWeights<T>&,            \
                                    AttentionProbe<T>*);

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)
STNET_INSTANTIATE(long double)

#undef STNET_INSTANTIATE

}  // namespace stnet
