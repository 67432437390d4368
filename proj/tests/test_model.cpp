// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "stnet/flops.hpp"
#include "stnet/mac_counter.hpp"
#include "stnet/model.hpp"

using namespace stnet;
namespace oc = stnet::oracle;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.n_c = 8;
  c.n_t = 8;
  c.codeword = 32;
  c.embed_dim = 8;
  c.heads = 2;
  c.window = 4;
  return c;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("codeword length follows the compression ratio") {
  const std::pair<const char*, std::size_t> table[] = {
      {"1/4", 512}, {"1/8", 256}, {"1/16", 128}, {"1/32", 64}, {"1/64", 32}};
  for (auto [text, m] : table) {
    ModelConfig c;
    c.set_gamma(Ratio::parse(text));
    CHECK(c.codeword == m);
    CHECK(c.gamma() == Ratio::parse(text));
  }
  ModelConfig c;
  CHECK_THROWS(c.set_gamma(Ratio::make(1, 3)));
  CHECK_THROWS(c.set_gamma(Ratio::make(0, 1)));
}

TEST_CASE("config validation") {
  auto c = tiny();
  CHECK_NOTHROW(c.validate());
  c.window = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.codeword = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("config JSON round trip") {
  auto c = tiny();
  c.seed = 99;
  c.cr_channels = 3;
  nlohmann::json j = c;
  const auto back = j.get<ModelConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.seed == 99);
  CHECK(back.cr_channels == 3);
}

TEST_CASE("forward shapes and output range") {
  StnetModel<float> model(tiny());
  auto h = oc::random_leaf<float>("h", {3, 2, 8, 8}, 1, 0, 1).detach();
  auto s = model.encode(h);
  CHECK(s.shape() == Shape{3, 32});
  auto y = model.decode(s);
  CHECK(y.shape() == Shape{3, 2, 8, 8});
  for (auto v : y.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("samples in a batch do not interact") {
  StnetModel<double> model(tiny());
  auto h = oc::random_leaf<double>("h", {2, 2, 8, 8}, 2, 0, 1).detach();
  const auto both = model.forward(h);
  std::vector<double> first(h.values().begin(), h.values().begin() + 128);
  const auto alone = model.forward(Tensor<double>({1, 2, 8, 8}, first));
  for (std::size_t i = 0; i < 128; ++i) CHECK(both.at(i) == doctest::Approx(alone.at(i)).epsilon(1e-12));
}

TEST_CASE("blocks preserve their input shape") {
  ParamStore<double> store;
  Rng rng(3);
  const AttentionConfig cfg{8, 4, 8, 2};
  auto stb = StbWeights<double>::create(store, "stb", cfg, rng);
  auto x = oc::random_leaf<double>("x", {2, 8, 8, 8}, 4);
  CHECK(stb_forward(stb, cfg, x).shape() == x.shape());
  auto cr = CrBlockWeights<double>::create(store, "cr", 2, 5, rng);
  auto img = oc::random_leaf<double>("img", {2, 2, 8, 8}, 5);
  CHECK(cr_block_forward(cr, img).shape() == img.shape());
}

TEST_CASE("initialization is seeded") {
  auto c = tiny();
  StnetModel<float> a(c), b(c);
  c.seed = 2;
  StnetModel<float> other(c);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto pa = a.parameters()[i].values(), pb = b.parameters()[i].values(), po = other.parameters()[i].values();
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
    if (!std::equal(pa.begin(), pa.end(), po.begin())) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("parameter names are unique hierarchical paths") {
  StnetModel<float> model(tiny());
  std::set<std::string> names;
  for (const auto& p : model.parameters()) {
    CHECK(names.insert(p.name()).second);
    const bool rooted = p.name().rfind("encoder.", 0) == 0 || p.name().rfind("decoder.", 0) == 0;
    CHECK(rooted);
  }
}

TEST_CASE("single and double precision agree") {
  StnetModel<double> wide(tiny());
  StnetModel<float> narrow(tiny());
  narrow.copy_from(wide);
  auto hd = oc::random_leaf<double>("h", {2, 2, 8, 8}, 6, 0, 1).detach();
  std::vector<float> hf(hd.values().begin(), hd.values().end());
  const auto yd = wide.forward(hd);
  const auto yf = narrow.forward(Tensor<float>({2, 2, 8, 8}, hf));
  for (std::size_t i = 0; i < yd.numel(); ++i) CHECK(std::abs(yd.at(i) - yf.at(i)) < 1e-4);
}

TEST_CASE("counted work equals the analytic FLOPs report") {
  for (const char* g : {"1/4", "1/64"}) {
    ModelConfig c;
    c.set_gamma(Ratio::parse(g));
    StnetModel<float> model(c);
    Tensor<float> h({1, 2, 32, 32}, std::vector<float>(2048, 0.5f));
    MacCounter counter;
    {
      NoGradGuard guard;
      model.forward(h);
    }
    const auto report = count_flops(c);
    CHECK(counter.total() == report.total_macs());
    CHECK(counter.total_under("encoder/") == report.encoder_macs());
    for (const auto& [path, macs] : report.mac_map()) {
      CAPTURE(path);
      CHECK(counter.macs().count(path) == 1);
      if (counter.macs().count(path)) CHECK(counter.macs().at(path) == macs);
    }
  }
}

TEST_CASE("FLOPs are twice MACs plus normalization work") {
  const auto report = count_flops(ModelConfig{});
  std::uint64_t extra = 0;
  for (const auto& e : report.entries) {
    CHECK(e.flops >= 2 * e.macs);
    extra += e.flops - 2 * e.macs;
  }
  CHECK(report.total_flops() == 2 * report.total_macs() + extra);
  CHECK(report.encoder_macs() + report.decoder_macs() == report.total_macs());
}

}  // TEST_SUITE
