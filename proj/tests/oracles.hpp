// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Plain-loop reference implementations used as test oracles. Nothing here
// calls the library's kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "stnet/attention.hpp"

namespace stnet::oracle {

using Mat = std::vector<std::vector<double>>;  // row-major [rows][cols]

template <typename T>
Tensor<T> random_leaf(const std::string& name, Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::parameter(name, std::move(shape), std::move(v));
}

/// Overwrites every value of a leaf with uniform noise.
template <typename T>
void randomize(Tensor<T> t, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : t.mutable_values()) v = static_cast<T>(dist(rng));
}

template <typename T>
void randomize(const MhaWeights<T>& w, std::mt19937_64& rng) {
  for (const auto* l : {&w.query, &w.key, &w.value, &w.output}) {
    randomize(l->weight, rng);
    if (l->bias.defined()) randomize(l->bias, rng);
  }
}

/// Rows of a [n, d] slice starting at token `first` of a flat tensor.
template <typename T>
Mat tokens(const Tensor<T>& t, std::size_t first, std::size_t count, std::size_t d) {
  Mat m(count, std::vector<double>(d));
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < d; ++k) m[i][k] = static_cast<double>(t.at((first + i) * d + k));
  return m;
}

template <typename T>
Mat apply_linear(const Mat& x, const Linear<T>& l) {
  const std::size_t out = l.weight.dim(0), in = l.weight.dim(1);
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = l.bias.defined() ? static_cast<double>(l.bias.at(o)) : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += x[r][i] * static_cast<double>(l.weight.at(o * in + i));
      y[r][o] = acc;
    }
  return y;
}

/// Dense multi-head attention: queries q, keys/values kv.
template <typename T>
Mat mha(const Mat& q, const Mat& k, const Mat& v, const MhaWeights<T>& w, std::size_t heads) {
  const Mat Q = apply_linear(q, w.query), K = apply_linear(k, w.key), V = apply_linear(v, w.value);
  const std::size_t d = Q[0].size(), dh = d / heads;
  Mat mixed(q.size(), std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> s(k.size());
      for (std::size_t j = 0; j < k.size(); ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < dh; ++c) acc += Q[i][h * dh + c] * K[j][h * dh + c];
        s[j] = acc / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double total = 0;
      for (auto& x : s) total += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < k.size(); ++j)
        for (std::size_t c = 0; c < dh; ++c) mixed[i][h * dh + c] += s[j] / total * V[j][h * dh + c];
    }
  }
  return apply_linear(mixed, w.output);
}

/// x [1, L, L, d] flattened; returns token (r, c) at row r*L + c.
template <typename T>
Mat grid_tokens(const Tensor<T>& x, std::size_t L, std::size_t d) {
  return tokens(x, 0, L * L, d);
}

/// Independent windowed attention: each W x W tile attends within itself.
template <typename T>
Mat lsa(const Tensor<T>& x, const AttentionConfig& cfg, const MhaWeights<T>& w) {
  const std::size_t L = cfg.grid, W = cfg.window, d = cfg.embed_dim;
  const Mat all = grid_tokens(x, L, d);
  Mat out(L * L);
  for (std::size_t wr = 0; wr < L / W; ++wr)
    for (std::size_t wc = 0; wc < L / W; ++wc) {
      Mat win;
      std::vector<std::size_t> where;
      for (std::size_t r = 0; r < W; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          where.push_back((wr * W + r) * L + wc * W + c);
          win.push_back(all[where.back()]);
        }
      const Mat y = mha(win, win, win, w, cfg.heads);
      for (std::size_t i = 0; i < where.size(); ++i) out[where[i]] = y[i];
    }
  return out;
}

/// Sub-sampling conv (stride W, W x W kernel) over channels-last tokens, then
/// cross-attention from every grid token to the m*m summary tokens.
template <typename T>
Mat gsa(const Tensor<T>& x, const AttentionConfig& cfg, const GsaWeights<T>& w) {
  const std::size_t L = cfg.grid, W = cfg.window, d = cfg.embed_dim, m = L / W;
  const Mat all = grid_tokens(x, L, d);
  const auto& cw = w.subsample.weight;  // [d, d, W, W]
  Mat summary(m * m, std::vector<double>(d));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t o = 0; o < d; ++o) {
        double acc = static_cast<double>(w.subsample.bias.at(o));
        for (std::size_t c = 0; c < d; ++c)
          for (std::size_t r = 0; r < W; ++r)
            for (std::size_t s = 0; s < W; ++s)
              acc += all[(i * W + r) * L + j * W + s][c] * static_cast<double>(cw.at(((o * d + c) * W + r) * W + s));
        summary[i * m + j][o] = acc;
      }
  return mha(all, summary, summary, w.attention, cfg.heads);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) worst = std::max(worst, std::abs(a[i][k] - b[i][k]));
  return worst;
}

}  // namespace stnet::oracle
