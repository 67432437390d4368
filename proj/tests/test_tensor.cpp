// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "stnet/gradcheck.hpp"
#include "stnet/mac_counter.hpp"
#include "stnet/tensor.hpp"

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

Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed) {
  // Random readout so every output element contributes a distinct weight.
  auto w = random_leaf<double>("w", y.shape(), seed);
  return sum(mul(y, w.detach()));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and hand example") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, a);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{1, 2, 3, 4});
  auto r2 = matmul(a, eye);
  CHECK(std::vector<double>(r2.values().begin(), r2.values().end()) == std::vector<double>{1, 2, 3, 4});

  Tensor<double> b({2, 1}, {5, 6});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0) == 17);
  CHECK(c.at(1) == 39);
}

TEST_CASE("matmul with identity is exact for random matrices") {
  auto a = random_leaf<float>("a", {5, 7}, 3);
  std::vector<float> eye(49, 0.0f);
  for (int i = 0; i < 7; ++i) eye[i * 8] = 1.0f;
  auto r = matmul(a, Tensor<float>({7, 7}, eye));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(r.at(i) == a.at(i));
}

TEST_CASE("batched matmul broadcasts a shared right operand") {
  Tensor<double> a({2, 1, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 1}, {1, 1});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1, 1});
  CHECK(c.at(0) == 3);
  CHECK(c.at(1) == 7);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tensor<double> a({2, 3}, std::vector<double>(6, 1.0));
  Tensor<double> b({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradient matches central differences") {
  auto a = random_leaf<double>("a", {3, 3}, 11);
  auto b = random_leaf<double>("b", {3, 3}, 12);
  auto report = check_gradients<double>([&] { return sum(matmul(a, b)); }, {a, b}, 1e-6);
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("elementwise examples") {
  CHECK(gelu(Tensor<double>::scalar(0.0)).item() == 0.0);
  CHECK(gelu(Tensor<double>::scalar(10.0)).item() == doctest::Approx(10.0).epsilon(1e-7));
  CHECK(sigmoid(Tensor<double>::scalar(0.0)).item() == 0.5);
  CHECK(gelu_value(-10.0) == doctest::Approx(0.0).epsilon(1e-12));
  // Exact erf form: gelu(1) = Phi(1) = 0.8413447460685429...
  CHECK(gelu_value(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
}

TEST_CASE("elementwise gradients") {
  auto a = random_leaf<double>("a", {2, 3}, 21, -3, 3);
  auto b = random_leaf<double>("b", {2, 3}, 22, -3, 3);
  auto s = random_leaf<double>("s", {1}, 23);
  struct Case {
    const char* name;
    std::function<Tensor<double>()> f;
    std::vector<Tensor<double>> leaves;
  };
  std::vector<Case> cases = {
      {"add", [&] { return weighted_sum(add(a, b), 1); }, {a, b}},
      {"sub", [&] { return weighted_sum(sub(a, b), 2); }, {a, b}},
      {"mul", [&] { return weighted_sum(mul(a, b), 3); }, {a, b}},
      {"mul scalar broadcast", [&] { return weighted_sum(mul(a, s), 4); }, {a, s}},
      {"scale", [&] { return weighted_sum(scale(a, 2.5), 5); }, {a}},
      {"sigmoid", [&] { return weighted_sum(sigmoid(a), 6); }, {a}},
      {"gelu", [&] { return weighted_sum(gelu(a), 7); }, {a}},
      {"mean", [&] { return mean(mul(a, a)); }, {a}},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(check_gradients<double>(c.f, c.leaves, 1e-6).max_rel_error < 1e-5);
  }
}

TEST_CASE("softmax examples") {
  auto u = softmax(Tensor<double>({4}, {0, 0, 0, 0}), -1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(u.at(i) == 0.25);
  auto big = softmax(Tensor<float>({2}, {1000.0f, 0.0f}), 0);
  CHECK(big.at(0) == 1.0f);
  CHECK(big.at(1) >= 0.0f);
  CHECK(big.at(1) < 1e-30f);
  CHECK(std::isfinite(big.at(1)));
}

TEST_CASE("softmax slices sum to one over any axis") {
  auto x = random_leaf<float>("x", {3, 4, 5}, 31, -20, 20);
  for (int axis : {0, 1, 2}) {
    auto y = softmax(x, axis);
    const std::size_t n = x.dim(static_cast<std::size_t>(axis));
    std::size_t inner = 1;
    for (std::size_t k = static_cast<std::size_t>(axis) + 1; k < 3; ++k) inner *= x.dim(k);
    const std::size_t outer = x.numel() / (n * inner);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        double total = 0;
        for (std::size_t k = 0; k < n; ++k) {
          const float v = y.at(o * n * inner + k * inner + i);
          CHECK(v >= 0.0f);
          CHECK(v <= 1.0f);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("softmax gradient") {
  auto x = random_leaf<double>("x", {2, 5}, 41, -2, 2);
  for (int axis : {0, 1}) {
    auto r = check_gradients<double>([&] { return weighted_sum(softmax(x, axis), 42); }, {x}, 1e-6);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("backward examples") {
  auto x = random_leaf<double>("x", {2, 3, 4}, 51);
  auto g = backward(sum(x));
  for (auto v : g.of(x).values()) CHECK(v == 1.0);

  auto g2 = backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(g2.of(x).at(i) == doctest::Approx(2 * x.at(i)).epsilon(1e-15));
}

TEST_CASE("reused tensors accumulate gradients") {
  auto x = random_leaf<double>("x", {3}, 52);
  // y = x + x*x: dy/dx = 1 + 2x
  auto g = backward(sum(add(x, mul(x, x))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(g.of(x).at(i) == doctest::Approx(1 + 2 * x.at(i)));
}

TEST_CASE("one gradient per requires_grad leaf") {
  auto a = random_leaf<double>("a", {2, 2}, 61);
  auto b = random_leaf<double>("b", {2, 2}, 62);
  Tensor<double> c({2, 2}, {1, 2, 3, 4});  // constant, no gradient
  auto g = backward(sum(mul(matmul(a, b), add(c, a))));
  CHECK(g.size() == 2);
  CHECK(g.contains(a));
  CHECK(g.contains(b));
  CHECK_FALSE(g.contains(c));
  CHECK(g.by_name().count("a") == 1);
}

TEST_CASE("tape is topologically ordered") {
  auto a = random_leaf<double>("a", {2, 2}, 71);
  auto y = sum(sigmoid(matmul(a, add(a, a))));
  auto tape = Tape<double>::record(y);
  std::set<const detail::Node<double>*> seen;
  for (const auto& leaf : tape.leaves()) seen.insert(leaf.get());
  for (const auto& op : tape.ops()) {
    for (const auto& p : op->parents) CHECK(seen.count(p.get()) == 1);
    seen.insert(op.get());
  }
  CHECK(tape.ops().back().get() == y.node().get());
}

TEST_CASE("backward requires a scalar root") {
  auto a = random_leaf<double>("a", {2, 2}, 81);
  CHECK_THROWS(backward(mul(a, a)));
}

TEST_CASE("no-grad mode records nothing") {
  auto a = random_leaf<double>("a", {2}, 82);
  NoGradGuard guard;
  auto y = sum(mul(a, a));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("shape ops round trip and differentiate") {
  auto x = random_leaf<double>("x", {2, 3, 4}, 91);
  auto p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  auto back = permute(p, {1, 2, 0});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.at(i) == x.at(i));
  CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
  auto y = random_leaf<double>("y", {2, 1, 4}, 92);
  auto c = concat<double>({x, y}, 1);
  CHECK(c.shape() == Shape{2, 4, 4});
  auto r = check_gradients<double>([&] { return weighted_sum(reshape(permute(concat<double>({x, y}, 1), {1, 0, 2}), {32}), 93); },
                                   {x, y}, 1e-6);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("forward ops on finite inputs stay finite") {
  auto x = random_leaf<float>("x", {4, 8}, 101, -50, 50);
  for (const auto& y : {sigmoid(x), gelu(x), softmax(x, 1), matmul(x, permute(x, {1, 0}))}) {
    CHECK(y.numel() == shape_numel(y.shape()));
    for (auto v : y.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("identical forward passes are bitwise identical") {
  auto run = [] {
    auto a = random_leaf<float>("a", {6, 6}, 111);
    auto b = random_leaf<float>("b", {6, 6}, 112);
    auto y = softmax(gelu(matmul(a, b)), 1);
    return std::vector<float>(y.values().begin(), y.values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("mac counter records matmul work under labels") {
  MacCounter counter;
  Tensor<float> a({2, 3, 4}, std::vector<float>(24, 1.0f));
  Tensor<float> b({4, 5}, std::vector<float>(20, 1.0f));
  {
    MacLabel outer("outer");
    MacLabel inner("mm");
    matmul(a, b);
  }
  CHECK(counter.total() == 2 * 3 * 4 * 5);
  CHECK(counter.macs().at("outer/mm") == 120);
  CHECK(counter.total_under("outer/") == 120);
}

TEST_CASE("finite_diff_check on a linear function is exact") {
  auto x = random_leaf<double>("x", {3, 4}, 121);
  const double err = finite_diff_check<double>([](const Tensor<double>& t) { return sum(t); }, x, 1e-4);
  CHECK(err < 1e-10);
}

}  // TEST_SUITE
