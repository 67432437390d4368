// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "stnet/gradcheck.hpp"
#include "stnet/layers.hpp"

using namespace stnet;

namespace {

template <typename T>
Tensor<T> random_leaf(const std::string& name, Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::parameter(name, std::move(shape), std::move(v));
}

// Direct seven-loop cross-correlation.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                               const ConvGeometry& g) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t OH = conv_out_extent(H, KH, g.stride, g.pad.h), OW = conv_out_extent(W, KW, g.stride, g.pad.w);
  std::vector<double> y(B * O * OH * OW);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = b.at(o);
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < KH; ++ki)
              for (std::size_t kj = 0; kj < KW; ++kj) {
                const long r = static_cast<long>(i * g.stride + ki) - static_cast<long>(g.pad.h);
                const long s = static_cast<long>(j * g.stride + kj) - static_cast<long>(g.pad.w);
                if (r < 0 || s < 0 || r >= static_cast<long>(H) || s >= static_cast<long>(W)) continue;
                acc += x.at(((n * C + c) * H + r) * W + s) * w.at(((o * C + c) * KH + ki) * KW + kj);
              }
          y[((n * O + o) * OH + i) * OW + j] = acc;
        }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("conv2d identity kernel") {
  auto x = random_leaf<double>("x", {2, 1, 4, 5}, 1);
  Tensor<double> w({1, 1, 1, 1}, {1.0});
  auto y = conv2d(x, w, Tensor<double>({1}, {0.0}), {});
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("conv2d ones example") {
  Tensor<double> x({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor<double> w({1, 1, 2, 2}, std::vector<double>(4, 1.0));
  auto y = conv2d(x, w, Tensor<double>({1}, {0.0}), {});
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (auto v : y.values()) CHECK(v == 4.0);
}

TEST_CASE("strided sub-sampling conv gives the m x m map") {
  Tensor<float> x({1, 3, 32, 32}, std::vector<float>(3 * 1024, 1.0f));
  Tensor<float> w({3, 3, 8, 8}, std::vector<float>(3 * 3 * 64, 0.01f));
  auto y = conv2d(x, w, Tensor<float>({3}, {0, 0, 0}), {8, {0, 0}});
  CHECK(y.shape() == Shape{1, 3, 4, 4});
}

TEST_CASE("conv2d matches the direct-loop oracle") {
  struct Geo {
    std::size_t kh, kw, stride, ph, pw;
  };
  for (auto g : {Geo{3, 3, 1, 1, 1}, Geo{1, 9, 1, 0, 4}, Geo{9, 1, 1, 4, 0}, Geo{2, 2, 2, 0, 0}, Geo{3, 3, 2, 1, 1}}) {
    auto x = random_leaf<double>("x", {2, 3, 9, 10}, 7);
    auto w = random_leaf<double>("w", {4, 3, g.kh, g.kw}, 8);
    auto b = random_leaf<double>("b", {4}, 9);
    ConvGeometry geom{g.stride, {g.ph, g.pw}};
    auto y = conv2d(x, w, b, geom);
    auto ref = naive_conv(x, w, b, geom);
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv transpose identity kernel and shape formula") {
  auto x = random_leaf<double>("x", {1, 1, 3, 3}, 11);
  auto y = conv_transpose2d(x, Tensor<double>({1, 1, 1, 1}, {1.0}), Tensor<double>({1}, {0.0}), {});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));

  auto x2 = random_leaf<float>("x2", {1, 2, 4, 4}, 12);
  auto w2 = random_leaf<float>("w2", {2, 3, 2, 2}, 13);
  auto y2 = conv_transpose2d(x2, w2, Tensor<float>::zeros({3}), {2, {0, 0}});
  CHECK(y2.shape() == Shape{1, 3, 8, 8});
  CHECK(conv_transpose_out_extent(4, 2, 2, 0) == 8);
}

TEST_CASE("conv and conv transpose are adjoint") {
  // <conv(x), y> == <x, convT(y)> with the same weights and zero bias.
  struct Geo {
    std::size_t c, o, h, w, k, stride, pad;
  };
  std::uint64_t seed = 20;
  for (auto g : {Geo{2, 4, 32, 32, 3, 1, 1}, Geo{4, 2, 32, 32, 3, 1, 1}, Geo{4, 4, 32, 32, 8, 8, 0},
                 Geo{3, 5, 9, 7, 3, 2, 1}}) {
    auto x = random_leaf<float>("x", {2, g.c, g.h, g.w}, ++seed);
    auto w = random_leaf<float>("w", {g.o, g.c, g.k, g.k}, ++seed);
    ConvGeometry geom{g.stride, {g.pad, g.pad}};
    auto cx = conv2d(x, w, Tensor<float>::zeros({g.o}), geom);
    auto y = random_leaf<float>("y", cx.shape(), ++seed);
    // convT weight layout is [in, out, kh, kw] with in = conv's out channels.
    auto ty = conv_transpose2d(y, w, Tensor<float>::zeros({g.c}), geom);
    REQUIRE(ty.shape() == x.shape());
    auto d64 = [](const Tensor<float>& a) { return std::vector<double>(a.values().begin(), a.values().end()); };
    const double lhs = dot(d64(cx), d64(y)), rhs = dot(d64(x), d64(ty));
    CHECK(std::abs(lhs - rhs) <= 1e-4 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("conv, conv transpose and linear gradients") {
  auto x = random_leaf<double>("x", {2, 2, 5, 6}, 31);
  auto w = random_leaf<double>("w", {3, 2, 3, 3}, 32);
  auto b = random_leaf<double>("b", {3}, 33);
  auto wt = random_leaf<double>("wt", {2, 3, 3, 3}, 34);
  auto readout = random_leaf<double>("r", {2, 3, 5, 6}, 35).detach();
  auto r1 = check_gradients<double>([&] { return sum(mul(conv2d(x, w, b, {1, {1, 1}}), readout)); }, {x, w, b}, 1e-6);
  CHECK(r1.max_rel_error < 1e-5);
  auto readout2 = random_leaf<double>("r", {2, 3, 11, 13}, 36).detach();
  auto r2 = check_gradients<double>([&] { return sum(mul(conv_transpose2d(x, wt, b, {2, {0, 0}}), readout2)); },
                                    {x, wt, b}, 1e-6);
  CHECK(r2.max_rel_error < 1e-5);

  auto xl = random_leaf<double>("xl", {4, 5}, 37);
  auto wl = random_leaf<double>("wl", {3, 5}, 38);
  auto bl = random_leaf<double>("bl", {3}, 39);
  auto r3 = check_gradients<double>([&] { return sum(mul(linear(xl, wl, bl), linear(xl, wl, bl))); }, {xl, wl, bl},
                                    1e-6);
  CHECK(r3.max_rel_error < 1e-5);
}

TEST_CASE("linear example") {
  Tensor<double> x({1, 2}, {1, 2});
  Tensor<double> w({2, 2}, {1, 0, 1, 1});
  auto y = linear(x, w, Tensor<double>({2}, {0.5, -1}));
  CHECK(y.at(0) == 1.5);
  CHECK(y.at(1) == 2.0);
}

TEST_CASE("layer norm examples") {
  Tensor<double> ones({4}, {1, 1, 1, 1}), zeros({4}, {0, 0, 0, 0});
  auto c = layer_norm(Tensor<double>({1, 4}, {5, 5, 5, 5}), ones, zeros, LayerNorm<double>::kEpsilon);
  for (auto v : c.values()) CHECK(v == 0.0);
  auto p = layer_norm(Tensor<double>({1, 2}, {1, -1}), Tensor<double>({2}, {1, 1}), Tensor<double>({2}, {0, 0}),
                      LayerNorm<double>::kEpsilon);
  CHECK(p.at(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(p.at(1) == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("layer norm pre-affine statistics") {
  auto x = random_leaf<float>("x", {50, 16}, 41, -4, 7);
  auto y = layer_norm(x, Tensor<float>::full({16}, 1.0f), Tensor<float>::zeros({16}), 1e-5);
  for (std::size_t t = 0; t < 50; ++t) {
    double mean = 0, var = 0;
    for (std::size_t k = 0; k < 16; ++k) mean += y.at(t * 16 + k);
    mean /= 16;
    for (std::size_t k = 0; k < 16; ++k) var += (y.at(t * 16 + k) - mean) * (y.at(t * 16 + k) - mean);
    var /= 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1) < 1e-3);
  }
}

TEST_CASE("layer norm gradient") {
  auto x = random_leaf<double>("x", {3, 5}, 51, -2, 2);
  auto g = random_leaf<double>("g", {5}, 52, 0.5, 1.5);
  auto b = random_leaf<double>("b", {5}, 53);
  auto readout = random_leaf<double>("r", {3, 5}, 54).detach();
  auto r = check_gradients<double>([&] { return sum(mul(layer_norm(x, g, b, 1e-5), readout)); }, {x, g, b}, 1e-6);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("parameter store rejects duplicates and initializes deterministically") {
  ParamStore<float> store;
  Rng rng(3);
  auto lin = Linear<float>::create(store, "fc", 8, 4, rng);
  CHECK_THROWS(store.create("fc.weight", {1}, {0.0}));
  CHECK(store.total_count() == 8 * 4 + 4);
  const double bound = 1.0 / std::sqrt(8.0);
  for (auto v : lin.weight.values()) CHECK(std::abs(v) <= bound);
  for (auto v : lin.bias.values()) CHECK(v == 0.0f);

  ParamStore<float> again;
  Rng rng2(3);
  auto lin2 = Linear<float>::create(again, "fc", 8, 4, rng2);
  for (std::size_t i = 0; i < lin.weight.numel(); ++i) CHECK(lin.weight.at(i) == lin2.weight.at(i));

  auto ln = LayerNorm<float>::create(store, "ln", 6);
  for (auto v : ln.gamma.values()) CHECK(v == 1.0f);
  for (auto v : ln.beta.values()) CHECK(v == 0.0f);
}

TEST_CASE("adam first step moves by lr") {
  auto w = Tensor<double>::parameter("w", {3}, {1.0, -2.0, 0.5});
  Adam<double> adam({w}, AdamConfig{1e-3});
  adam.step(std::vector<Tensor<double>>{Tensor<double>({3}, {1.0, 1.0, 1.0})});
  CHECK(w.at(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(w.at(1) == doctest::Approx(-2.0 - 1e-3).epsilon(1e-9));
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam with zero gradient or zero lr leaves parameters unchanged") {
  auto w = Tensor<double>::parameter("w", {2}, {0.3, -0.7});
  Adam<double> adam({w});
  for (int i = 0; i < 5; ++i) adam.step(std::vector<Tensor<double>>{Tensor<double>::zeros({2})});
  CHECK(w.at(0) == 0.3);
  CHECK(w.at(1) == -0.7);

  auto u = Tensor<double>::parameter("u", {2}, {0.3, -0.7});
  Adam<double> frozen({u}, AdamConfig{0.0});
  frozen.step(std::vector<Tensor<double>>{Tensor<double>({2}, {5.0, -3.0})});
  CHECK(u.at(0) == 0.3);
  CHECK(u.at(1) == -0.7);
}

TEST_CASE("adam descends a convex quadratic") {
  auto w = Tensor<double>::parameter("w", {1}, {1.0});
  Adam<double> adam({w});
  std::vector<double> f;
  for (int step = 0; step <= 110; ++step) {
    auto loss = sum(mul(w, w));
    f.push_back(loss.item());
    adam.step(backward(loss));
  }
  // Strict decrease at every 10-step checkpoint over the first 100 steps.
  for (int t = 10; t <= 100; t += 10) CHECK(f[static_cast<std::size_t>(t)] < f[static_cast<std::size_t>(t - 10)]);
  // Any 50-step window after step 10 ends lower than it starts.
  for (std::size_t t = 10; t + 50 < f.size(); ++t) CHECK(f[t + 50] < f[t]);
}

TEST_CASE("adam rejects misshapen gradients") {
  auto w = Tensor<double>::parameter("w", {2}, {0, 0});
  Adam<double> adam({w});
  CHECK_THROWS_AS(adam.step(std::vector<Tensor<double>>{Tensor<double>::zeros({3})}), ShapeError);
}

}  // TEST_SUITE
