// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stnet/gradcheck.hpp"
#include "stnet/mac_counter.hpp"

using namespace stnet;
namespace oc = stnet::oracle;

namespace {

template <typename T>
struct Fixture {
  ParamStore<T> store;
  Rng rng;
  MhaWeights<T> mha;
  GsaWeights<T> gsa;

  Fixture(const AttentionConfig& cfg, std::uint64_t seed)
      : rng(seed),
        mha(MhaWeights<T>::create(store, "lsa", cfg.embed_dim, rng)),
        gsa(GsaWeights<T>::create(store, "gsa", cfg, rng)) {
    // Nonzero biases so the bias paths are exercised too.
    std::mt19937_64 noise(seed + 1);
    oc::randomize(mha, noise);
    oc::randomize(gsa.attention, noise);
    oc::randomize(gsa.subsample.weight, noise, 0.2);
    oc::randomize(gsa.subsample.bias, noise);
  }
};

template <typename T>
oc::Mat as_mat(const Tensor<T>& t, std::size_t d) {
  return oc::tokens(t, 0, t.numel() / d, d);
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("multi-head attention matches the dense oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const AttentionConfig cfg{4, 4, 8, 2};
    Fixture<double> f(cfg, seed);
    auto q = oc::random_leaf<double>("q", {1, 7, 8}, seed * 10);
    auto kv = oc::random_leaf<double>("kv", {1, 5, 8}, seed * 10 + 1);
    auto y = multi_head_attention(q, kv, kv, f.mha, 2);
    CHECK(y.shape() == Shape{1, 7, 8});
    const auto expect = oc::mha(as_mat(q, 8), as_mat(kv, 8), as_mat(kv, 8), f.mha, 2);
    CHECK(oc::max_abs_diff(as_mat(y, 8), expect) < 1e-12);
  }
}

TEST_CASE("LSA with a single window is full attention") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const AttentionConfig cfg{4, 4, 8, 2};
    Fixture<double> f(cfg, seed);
    auto x = oc::random_leaf<double>("x", {1, 4, 4, 8}, 100 + seed);
    const auto all = oc::grid_tokens(x, 4, 8);
    const auto expect = oc::mha(all, all, all, f.mha, 2);
    CHECK(oc::max_abs_diff(as_mat(lsa_forward(x, cfg, f.mha), 8), expect) < 1e-6);
  }
}

TEST_CASE("LSA matches a per-window oracle") {
  const AttentionConfig cfg{8, 4, 8, 2};
  Fixture<double> f(cfg, 7);
  auto x = oc::random_leaf<double>("x", {1, 8, 8, 8}, 71);
  CHECK(oc::max_abs_diff(as_mat(lsa_forward(x, cfg, f.mha), 8), oc::lsa(x, cfg, f.mha)) < 1e-12);
}

TEST_CASE("LSA windows do not see each other") {
  const AttentionConfig cfg{4, 2, 4, 2};
  Fixture<double> f(cfg, 8);
  auto x = oc::random_leaf<double>("x", {1, 4, 4, 4}, 81);
  std::vector<double> changed(x.values().begin(), x.values().end());
  // Zero window (0, 0): grid rows 0-1, cols 0-1.
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < 4; ++k) changed[(r * 4 + c) * 4 + k] = 0.0;
  const auto a = lsa_forward(x, cfg, f.mha);
  const auto b = lsa_forward(Tensor<double>({1, 4, 4, 4}, changed), cfg, f.mha);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      if (r < 2 && c < 2) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t i = (r * 4 + c) * 4 + k;
        CHECK(a.at(i) == b.at(i));
      }
    }
}

TEST_CASE("GSA with one summary token is the closed form") {
  // A single key makes the softmax exactly 1, so every query receives
  // Wo (Wv s + bv) + bo where s is the sub-sampled token.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const AttentionConfig cfg{4, 4, 4, 2};
    Fixture<double> f(cfg, seed);
    auto x = oc::random_leaf<double>("x", {1, 4, 4, 4}, 200 + seed);
    auto summary = f.gsa.subsample.forward(permute(x, {0, 3, 1, 2}));
    CHECK(summary.shape() == Shape{1, 4, 1, 1});
    // Same projection kernels as the model, so any rounding from the
    // attention step itself would show up as a mismatch.
    const auto& mha = f.gsa.attention;
    const auto v = mha.value.forward(reshape(summary, {1, 4}));
    std::vector<double> rows;
    for (int t = 0; t < 16; ++t) rows.insert(rows.end(), v.values().begin(), v.values().end());
    const auto closed = mha.output.forward(Tensor<double>({16, 4}, rows));
    const auto loops = oc::apply_linear(oc::apply_linear(oc::tokens(summary, 0, 1, 4), mha.value), mha.output);
    auto y = gsa_forward(x, cfg, f.gsa);
    for (std::size_t t = 0; t < 16; ++t)
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(y.at(t * 4 + k) == closed.at(k));
        CHECK(std::abs(y.at(t * 4 + k) - loops[0][k]) < 1e-12);
      }
  }
}

TEST_CASE("GSA matches the sub-sample and cross-attend oracle") {
  const AttentionConfig cfg{8, 4, 8, 2};
  Fixture<double> f(cfg, 9);
  auto x = oc::random_leaf<double>("x", {1, 8, 8, 8}, 91);
  CHECK(oc::max_abs_diff(as_mat(gsa_forward(x, cfg, f.gsa), 8), oc::gsa(x, cfg, f.gsa)) < 1e-12);
}

TEST_CASE("attention maps are row stochastic") {
  const AttentionConfig cfg{8, 4, 8, 4};
  Fixture<float> f(cfg, 10);
  auto x = oc::random_leaf<float>("x", {2, 8, 8, 8}, 101, -3, 3);
  for (bool global : {false, true}) {
    AttentionProbe<float> probe;
    if (global) {
      gsa_forward(x, cfg, f.gsa, &probe);
    } else {
      lsa_forward(x, cfg, f.mha, &probe);
    }
    const auto& w = probe.weights;
    REQUIRE(w.rank() == 4);
    CHECK(w.dim(1) == 4);
    CHECK(w.dim(3) == (global ? 4u : 16u));
    const std::size_t nk = w.dim(3);
    for (std::size_t row = 0; row < w.numel() / nk; ++row) {
      double total = 0;
      for (std::size_t j = 0; j < nk; ++j) total += w.at(row * nk + j);
      CHECK(std::abs(total - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("degenerate token sets") {
  const AttentionConfig cfg{4, 4, 4, 2};
  Fixture<double> f(cfg, 11);
  // One token attends only to itself.
  auto one = oc::random_leaf<double>("one", {1, 1, 4}, 111);
  const auto y1 = multi_head_attention(one, one, one, f.mha, 2);
  const auto v1 = oc::apply_linear(oc::apply_linear(as_mat(one, 4), f.mha.value), f.mha.output);
  CHECK(oc::max_abs_diff(as_mat(y1, 4), v1) < 1e-14);

  // Identical keys give uniform weights and identical outputs.
  std::vector<double> dup;
  for (int i = 0; i < 3; ++i) dup.insert(dup.end(), one.values().begin(), one.values().end());
  Tensor<double> keys({1, 3, 4}, dup);
  AttentionProbe<double> probe;
  const auto y3 = multi_head_attention(keys, keys, keys, f.mha, 2, &probe);
  for (auto w : probe.weights.values()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-14));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(y3.at(t * 4 + k) == doctest::Approx(y1.at(k)).epsilon(1e-13));
}

TEST_CASE("heads are independent slices") {
  // With an identity output projection, swapping the head slices of Q, K, V
  // swaps the output column blocks.
  const std::size_t d = 4, heads = 2, dh = 2;
  const AttentionConfig cfg{4, 4, d, heads};
  Fixture<double> f(cfg, 12);
  auto eye = f.mha.output.weight.mutable_values();
  for (std::size_t i = 0; i < d * d; ++i) eye[i] = (i % (d + 1) == 0) ? 1.0 : 0.0;
  for (auto& b : f.mha.output.bias.mutable_values()) b = 0.0;

  ParamStore<double> store2;
  Rng rng2(1);
  auto swapped = MhaWeights<double>::create(store2, "swapped", d, rng2);
  auto swap_rows = [&](const Linear<double>& src, Linear<double>& dst) {
    auto w = dst.weight.mutable_values();
    for (std::size_t r = 0; r < d; ++r) {
      const std::size_t from = (r + dh) % d;
      for (std::size_t c = 0; c < d; ++c) w[r * d + c] = src.weight.at(from * d + c);
      if (src.bias.defined()) dst.bias.mutable_values()[r] = src.bias.at(from);
    }
  };
  swap_rows(f.mha.query, swapped.query);
  swap_rows(f.mha.key, swapped.key);
  swap_rows(f.mha.value, swapped.value);
  std::copy(f.mha.output.weight.values().begin(), f.mha.output.weight.values().end(),
            swapped.output.weight.mutable_values().begin());
  for (auto& b : swapped.output.bias.mutable_values()) b = 0.0;

  auto x = oc::random_leaf<double>("x", {1, 6, d}, 121);
  const auto a = multi_head_attention(x, x, x, f.mha, heads);
  const auto b = multi_head_attention(x, x, x, swapped, heads);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < d; ++c) CHECK(b.at(t * d + c) == doctest::Approx(a.at(t * d + (c + dh) % d)).epsilon(1e-13));
}

TEST_CASE("window partition counts and round trip") {
  auto x = oc::random_leaf<float>("x", {2, 32, 32, 3}, 131);
  auto w = window_partition(x, 8);
  CHECK(w.shape() == Shape{2 * 16, 64, 3});
  CHECK(window_partition(x, 32).shape() == Shape{2, 1024, 3});
  auto back = window_merge(w, 32, 8);
  CHECK(back.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.at(i) == x.at(i));
  // Window 1 of sample 0 starts at grid (0, 8).
  CHECK(w.at(64 * 3) == x.at(8 * 3));
  CHECK_THROWS_AS(window_partition(x, 5), ShapeError);
}

TEST_CASE("attention config validation") {
  CHECK_THROWS_AS((AttentionConfig{32, 5, 32, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((AttentionConfig{32, 8, 30, 4}.validate()), std::invalid_argument);
  CHECK_NOTHROW((AttentionConfig{32, 8, 32, 4}.validate()));
}

TEST_CASE("LSA score work is full attention's divided by m squared") {
  for (auto [L, W] : {std::pair<std::size_t, std::size_t>{16, 4}, {32, 8}, {32, 16}}) {
    CAPTURE(L);
    CAPTURE(W);
    const AttentionConfig cfg{L, W, 4, 2};
    Fixture<float> f(cfg, 13);
    auto x = oc::random_leaf<float>("x", {1, L, L, 4}, 141);
    std::uint64_t local_score = 0, local_agg = 0, full_score = 0, full_agg = 0;
    {
      MacCounter counter;
      lsa_forward(x, cfg, f.mha);
      local_score = counter.macs().at("lsa/score");
      local_agg = counter.macs().at("lsa/aggregate");
    }
    {
      MacCounter counter;
      auto tokens = reshape(x, {1, L * L, 4});
      multi_head_attention(tokens, tokens, tokens, f.mha, 2);
      full_score = counter.macs().at("score");
      full_agg = counter.macs().at("aggregate");
    }
    const std::uint64_t m2 = (L / W) * (L / W);
    CHECK(local_score * m2 == full_score);
    CHECK(local_agg * m2 == full_agg);
    const auto analytic = attention_flops(cfg);
    CHECK(analytic.lsa_score == local_score);
    CHECK(analytic.full_score == full_score);
    CHECK(analytic.lsa_to_full_ratio() == doctest::Approx(1.0 / static_cast<double>(m2)));
  }
}

TEST_CASE("GSA score work is m^2 L^2 d") {
  for (auto [L, W] : {std::pair<std::size_t, std::size_t>{16, 4}, {32, 8}, {32, 16}}) {
    const AttentionConfig cfg{L, W, 8, 2};
    Fixture<float> f(cfg, 14);
    auto x = oc::random_leaf<float>("x", {1, L, L, 8}, 151);
    MacCounter counter;
    gsa_forward(x, cfg, f.gsa);
    const std::uint64_t m = L / W;
    CHECK(counter.macs().at("gsa/score") == m * m * L * L * cfg.head_dim() * cfg.heads);
    CHECK(counter.macs().at("gsa/aggregate") == m * m * L * L * 8);
    CHECK(counter.macs().at("gsa/subsample") == attention_flops(cfg).gsa_subsample);
  }
}

TEST_CASE("analytic attention counts match the counter in total") {
  const AttentionConfig cfg{16, 4, 8, 2};
  Fixture<float> f(cfg, 15);
  auto x = oc::random_leaf<float>("x", {1, 16, 16, 8}, 161);
  MacCounter counter;
  lsa_forward(x, cfg, f.mha);
  gsa_forward(x, cfg, f.gsa);
  CHECK(counter.total() == attention_flops(cfg).total_macs());
}

TEST_CASE("attention gradients") {
  const AttentionConfig cfg{4, 2, 4, 2};
  Fixture<double> f(cfg, 16);
  auto x = oc::random_leaf<double>("x", {1, 4, 4, 4}, 171);
  auto readout = oc::random_leaf<double>("r", {1, 4, 4, 4}, 172).detach();
  std::vector<Tensor<double>> leaves = {x};
  for (const auto& p : f.store.tensors()) leaves.push_back(p);
  auto r = check_gradients<double>(
      [&] { return sum(mul(add(lsa_forward(x, cfg, f.mha), gsa_forward(x, cfg, f.gsa)), readout)); }, leaves, 1e-6);
  CHECK(r.max_rel_error < 1e-5);
}

}  // TEST_SUITE
