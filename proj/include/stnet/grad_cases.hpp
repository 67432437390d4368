// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient-check cases shared by the unit suite, the acceptance binary and
// the command-line gradcheck.
// Leaf values are drawn as floats so the float and double variants of a case
// hold identical numbers.

#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stnet/dataset.hpp"
#include "stnet/gradcheck.hpp"
#include "stnet/metrics.hpp"
#include "stnet/model.hpp"

namespace stnet::cases {

template <typename T>
struct GradCase {
  std::string name;
  std::function<Tensor<T>()> f;
  std::vector<Tensor<T>> leaves;
  std::shared_ptr<void> keep;  // owns whatever the closure refers to
};

template <typename T>
Tensor<T> leaf(const std::string& name, Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(static_cast<float>(dist(rng)));
  return Tensor<T>::parameter(name, std::move(shape), std::move(v));
}

/// Fixed random readout, so every output element gets its own weight.
template <typename T>
Tensor<T> readout(const Tensor<T>& y, std::uint64_t seed) {
  return sum(mul(y, leaf<T>("readout", y.shape(), seed).detach()));
}

/// Rounds every parameter to float so both precisions start from the same point.
template <typename T>
void round_to_float(const ParamStore<T>& store) {
  for (auto t : store.tensors())
    for (auto& v : t.mutable_values()) v = static_cast<T>(static_cast<float>(v));
}

inline ModelConfig tiny_model() {
  ModelConfig c;
  c.n_c = 8;
  c.n_t = 8;
  c.codeword = 32;
  c.embed_dim = 8;
  c.heads = 2;
  c.window = 4;
  return c;
}

template <typename T>
std::vector<GradCase<T>> op_cases() {
  std::vector<GradCase<T>> out;
  auto add_case = [&](std::string name, std::vector<Tensor<T>> leaves, std::function<Tensor<T>()> f,
                      std::shared_ptr<void> keep = nullptr) {
    out.push_back({std::move(name), std::move(f), std::move(leaves), std::move(keep)});
  };

  auto a = leaf<T>("a", {3, 4}, 1), b = leaf<T>("b", {4, 2}, 2), c = leaf<T>("c", {3, 4}, 3);
  auto batch = leaf<T>("batch", {2, 3, 4}, 4), s = leaf<T>("s", {1}, 5);
  add_case("matmul", {a, b}, [=] { return readout(matmul(a, b), 10); });
  add_case("batched matmul", {batch, b}, [=] { return readout(matmul(batch, b), 11); });
  add_case("add", {a, c}, [=] { return readout(add(a, c), 12); });
  add_case("sub", {a, c}, [=] { return readout(sub(a, c), 13); });
  add_case("mul", {a, c}, [=] { return readout(mul(a, c), 14); });
  add_case("mul broadcast", {a, s}, [=] { return readout(mul(a, s), 15); });
  add_case("scale", {a}, [=] { return readout(scale(a, T(-1.5)), 16); });
  add_case("sigmoid", {a}, [=] { return readout(sigmoid(scale(a, T(3))), 17); });
  add_case("gelu", {a}, [=] { return readout(gelu(scale(a, T(3))), 18); });
  add_case("softmax last", {batch}, [=] { return readout(softmax(batch, -1), 19); });
  add_case("softmax first", {batch}, [=] { return readout(softmax(batch, 0), 20); });
  add_case("sum", {a}, [=] { return sum(mul(a, a)); });
  add_case("mean", {batch}, [=] { return mean(mul(batch, batch)); });
  add_case("reshape", {batch}, [=] { return readout(reshape(batch, {4, 6}), 21); });
  add_case("permute", {batch}, [=] { return readout(permute(batch, {2, 0, 1}), 22); });
  add_case("concat", {a, c}, [=] { return readout(concat<T>({a, c}, 1), 23); });

  auto x = leaf<T>("x", {2, 3, 6, 6}, 30), w = leaf<T>("w", {4, 3, 3, 3}, 31), bias = leaf<T>("bias", {4}, 32);
  add_case("conv2d 3x3", {x, w, bias}, [=] { return readout(conv2d(x, w, bias, {1, {1, 1}}), 33); });
  add_case("conv2d stride 2", {x, w, bias}, [=] { return readout(conv2d(x, w, bias, {2, {0, 0}}), 34); });
  auto w19 = leaf<T>("w19", {4, 3, 1, 5}, 35);
  add_case("conv2d 1x5", {x, w19, bias}, [=] { return readout(conv2d(x, w19, bias, {1, {0, 2}}), 36); });
  auto wt = leaf<T>("wt", {3, 4, 3, 3}, 37);
  add_case("conv transpose", {x, wt, bias}, [=] { return readout(conv_transpose2d(x, wt, bias, {1, {1, 1}}), 38); });
  add_case("conv transpose stride 2", {x, wt, bias},
           [=] { return readout(conv_transpose2d(x, wt, bias, {2, {1, 1}}), 39); });

  auto lw = leaf<T>("lw", {5, 4}, 40), lb = leaf<T>("lb", {5}, 41);
  add_case("linear", {batch, lw, lb}, [=] { return readout(linear(batch, lw, lb), 42); });
  auto g = leaf<T>("gamma", {4}, 43, 0.5, 1.5), be = leaf<T>("beta", {4}, 44);
  add_case("layer norm", {batch, g, be}, [=] { return readout(layer_norm(batch, g, be, 1e-5), 45); });
  auto target = leaf<T>("target", {2, 3, 4}, 46, 0, 1);
  add_case("mse loss", {batch}, [=] { return mse_loss(target.detach(), batch); });

  {
    auto store = std::make_shared<ParamStore<T>>();
    Rng rng(50);
    const AttentionConfig cfg{4, 2, 4, 2};
    auto mha = std::make_shared<MhaWeights<T>>(MhaWeights<T>::create(*store, "mha", 4, rng));
    auto gsa = std::make_shared<GsaWeights<T>>(GsaWeights<T>::create(*store, "gsa", cfg, rng));
    auto stb = std::make_shared<StbWeights<T>>(StbWeights<T>::create(*store, "stb", cfg, rng));
    auto cr = std::make_shared<CrBlockWeights<T>>(CrBlockWeights<T>::create(*store, "cr", 2, 3, rng));
    round_to_float(*store);
    auto tokens = leaf<T>("tokens", {1, 4, 4, 4}, 51);
    auto img = leaf<T>("img", {1, 2, 6, 6}, 52);
    auto keep = std::shared_ptr<void>(store);
    auto with = [&](std::vector<Tensor<T>> first, const std::string& prefix) {
      for (const auto& p : store->tensors())
        if (p.name().rfind(prefix, 0) == 0) first.push_back(p);
      return first;
    };
    add_case("multi-head attention", with({tokens}, "mha"),
             [=] {
               auto t = reshape(tokens, {1, 16, 4});
               return readout(multi_head_attention(t, t, t, *mha, 2), 53);
             },
             keep);
    add_case("local attention", with({tokens}, "mha"), [=] { return readout(lsa_forward(tokens, cfg, *mha), 54); },
             keep);
    add_case("global attention", with({tokens}, "gsa"), [=] { return readout(gsa_forward(tokens, cfg, *gsa), 55); },
             keep);
    add_case("transformer block", with({tokens}, "stb"), [=] { return readout(stb_forward(*stb, cfg, tokens), 56); },
             keep);
    add_case("CR block", with({img}, "cr"), [=] { return readout(cr_block_forward(*cr, img), 57); }, keep);
  }
  return out;
}

/// Two normalized synthetic channels on the tiny model's 8 x 8 grid.
template <typename T>
Tensor<T> tiny_channels() {
  data::SynthConfig cfg;
  cfg.samples = 2;
  cfg.n_c = 8;
  cfg.n_t = 8;
  cfg.n_sub = 16;
  cfg.max_delay = 8;
  const auto ds = data::synth_channels(cfg).dataset;
  return Tensor<T>({2, 2, 8, 8}, std::vector<T>(ds.values.begin(), ds.values.end()));
}

/// Reconstruction loss of the tiny end-to-end model over all its parameters,
/// on inputs from the data domain.
template <typename T>
GradCase<T> end_to_end_case() {
  auto model = std::make_shared<StnetModel<T>>(tiny_model());
  round_to_float(model->params());
  auto h = tiny_channels<T>();
  GradCase<T> c;
  c.name = "end-to-end";
  c.leaves = model->parameters();
  c.f = [model, h] { return mse_loss(h, model->forward(h)); };
  c.keep = model;
  return c;
}

}  // namespace stnet::cases
