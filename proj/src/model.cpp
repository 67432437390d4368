// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/model.hpp"

#include <numeric>
#include <stdexcept>

#include "stnet/mac_counter.hpp"

namespace stnet {

// ---- Ratio ------------------------------------------------------------------

Ratio Ratio::make(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw std::invalid_argument("ratio with zero denominator");
  const auto g = std::gcd(num, den);
  return g == 0 ? Ratio{0, 1} : Ratio{num / g, den / g};
}

Ratio Ratio::parse(const std::string& text) {
  auto parse_uint = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("malformed ratio '" + text + "'");
    }
    return std::stoull(s);
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return make(parse_uint(text), 1);
  return make(parse_uint(text.substr(0, slash)), parse_uint(text.substr(slash + 1)));
}

// ---- ModelConfig ------------------------------------------------------------

Ratio ModelConfig::gamma() const { return Ratio::make(codeword, input_size()); }

AttentionConfig ModelConfig::attention() const { return AttentionConfig{n_c, window, embed_dim, heads}; }

void ModelConfig::validate() const {
  if (n_c == 0 || n_t == 0) throw std::invalid_argument("channel grid extents must be positive");
  if (n_c != n_t) {
    throw std::invalid_argument("the attention token grid must be square (Nc = " + std::to_string(n_c) +
                                ", Nt = " + std::to_string(n_t) + ")");
  }
  if (codeword == 0 || codeword > input_size()) {
    throw std::invalid_argument("codeword length " + std::to_string(codeword) + " outside [1, " +
                                std::to_string(input_size()) + "]");
  }
  if (encoder_channels == 0 || cr_channels == 0) throw std::invalid_argument("channel widths must be positive");
  attention().validate();
}

ModelConfig& ModelConfig::set_gamma(const Ratio& gamma) {
  const std::uint64_t scaled = gamma.num * input_size();
  if (gamma.num == 0 || scaled % gamma.den != 0) {
    throw std::invalid_argument("gamma " + gamma.str() + " does not give an integer codeword length for 2*" +
                                std::to_string(n_c) + "*" + std::to_string(n_t));
  }
  codeword = scaled / gamma.den;
  if (codeword > input_size()) throw std::invalid_argument("gamma " + gamma.str() + " exceeds 1");
  return *this;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_c", c.n_c},
                     {"n_t", c.n_t},
                     {"codeword", c.codeword},
                     {"gamma", c.gamma().str()},
                     {"embed_dim", c.embed_dim},
                     {"window", c.window},
                     {"heads", c.heads},
                     {"encoder_channels", c.encoder_channels},
                     {"cr_channels", c.cr_channels},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.n_c = j.value("n_c", d.n_c);
  c.n_t = j.value("n_t", d.n_t);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.window = j.value("window", d.window);
  c.heads = j.value("heads", d.heads);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.cr_channels = j.value("cr_channels", d.cr_channels);
  c.seed = j.value("seed", d.seed);
  c.codeword = j.value("codeword", d.codeword);
  if (j.contains("gamma") && !j.contains("codeword")) c.set_gamma(Ratio::parse(j.at("gamma").get<std::string>()));
}

// ---- STB --------------------------------------------------------------------

template <typename T>
StbWeights<T> StbWeights<T>::create(ParamStore<T>& store, const std::string& name, const AttentionConfig& config,
                                    Rng& rng) {
  const std::size_t d = config.embed_dim;
  StbWeights w;
  w.lsa = MhaWeights<T>::create(store, name + ".lsa", d, rng);
  w.norm1 = LayerNorm<T>::create(store, name + ".norm1", d);
  w.mlp1 = Mlp<T>::create(store, name + ".mlp1", d, d, rng);
  w.norm2 = LayerNorm<T>::create(store, name + ".norm2", d);
  w.gsa = GsaWeights<T>::create(store, name + ".gsa", config, rng);
  w.norm3 = LayerNorm<T>::create(store, name + ".norm3", d);
  w.mlp2 = Mlp<T>::create(store, name + ".mlp2", d, d, rng);
  w.norm4 = LayerNorm<T>::create(store, name + ".norm4", d);
  return w;
}

template <typename T>
Tensor<T> stb_forward(const StbWeights<T>& w, const AttentionConfig& config, const Tensor<T>& x) {
  auto y = w.norm1.forward(add(x, lsa_forward(x, config, w.lsa)));
  {
    MacLabel scope("mlp1");
    y = w.norm2.forward(add(y, w.mlp1.forward(y)));
  }
  y = w.norm3.forward(add(y, gsa_forward(y, config, w.gsa)));
  MacLabel scope("mlp2");
  return w.norm4.forward(add(y, w.mlp2.forward(y)));
}

// ---- CR block ---------------------------------------------------------------

template <typename T>
CrBlockWeights<T> CrBlockWeights<T>::create(ParamStore<T>& store, const std::string& name, std::size_t channels,
                                            std::size_t width, Rng& rng) {
  CrBlockWeights w;
  w.path_a = Conv2d<T>::create(store, name + ".path_a", channels, width, 3, 3, {1, {1, 1}}, rng);
  w.path_b1 = Conv2d<T>::create(store, name + ".path_b1", channels, width, 1, 9, {1, {0, 4}}, rng);
  w.path_b2 = Conv2d<T>::create(store, name + ".path_b2", width, width, 9, 1, {1, {4, 0}}, rng);
  w.fuse = Conv2d<T>::create(store, name + ".fuse", 2 * width, channels, 1, 1, {1, {}}, rng);
  return w;
}

template <typename T>
Tensor<T> cr_block_forward(const CrBlockWeights<T>& w, const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(1) != w.path_a.in_channels()) {
    throw ShapeError("cr block expects " + std::to_string(w.path_a.in_channels()) + " channels, got " +
                     shape_str(x.shape()));
  }
  Tensor<T> a, b;
  {
    MacLabel scope("path_a");
    a = gelu(w.path_a.forward(x));
  }
  {
    MacLabel scope("path_b1");
    b = gelu(w.path_b1.forward(x));
  }
  {
    MacLabel scope("path_b2");
    b = gelu(w.path_b2.forward(b));
  }
  MacLabel scope("fuse");
  return add(x, w.fuse.forward(concat<T>({a, b}, 1)));
}

// ---- StnetModel -------------------------------------------------------------

template <typename T>
StnetModel<T>::StnetModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const auto attn = config_.attention();
  const std::size_t d = config_.embed_dim, c = config_.encoder_channels, n = config_.input_size();
  const ConvGeometry same3{1, {1, 1}};

  encoder_.embed = Conv2d<T>::create(store_, "encoder.embed", 2, d, 3, 3, same3, rng);
  encoder_.stb = StbWeights<T>::create(store_, "encoder.stb", attn, rng);
  encoder_.conv = Conv2d<T>::create(store_, "encoder.conv", d, c, 3, 3, same3, rng);
  encoder_.convt = ConvTranspose2d<T>::create(store_, "encoder.convt", c, 2, 3, 3, same3, rng);
  encoder_.compress = Linear<T>::create(store_, "encoder.compress", n, config_.codeword, rng);

  decoder_.expand = Linear<T>::create(store_, "decoder.expand", config_.codeword, n, rng);
  decoder_.cr1 = CrBlockWeights<T>::create(store_, "decoder.cnn.cr1", 2, config_.cr_channels, rng);
  decoder_.cr2 = CrBlockWeights<T>::create(store_, "decoder.cnn.cr2", 2, config_.cr_channels, rng);
  decoder_.embed = Conv2d<T>::create(store_, "decoder.transformer.embed", 2, d, 3, 3, same3, rng);
  decoder_.stb = StbWeights<T>::create(store_, "decoder.transformer.stb", attn, rng);
  decoder_.project = Conv2d<T>::create(store_, "decoder.transformer.project", d, 2, 3, 3, same3, rng);
  decoder_.fusion = Conv2d<T>::create(store_, "decoder.fusion", 2, 2, 3, 3, same3, rng);
}

template <typename T>
Tensor<T> StnetModel<T>::transformer_stage(const Conv2d<T>& embed, const StbWeights<T>& stb,
                                           const Tensor<T>& x) const {
  Tensor<T> tokens;
  {
    MacLabel scope("embed");
    tokens = permute(embed.forward(x), {0, 2, 3, 1});
  }
  MacLabel scope("stb");
  return permute(stb_forward(stb, config_.attention(), tokens), {0, 3, 1, 2});
}

template <typename T>
Tensor<T> StnetModel<T>::encode(const Tensor<T>& h) const {
  if (h.rank() != 4 || h.dim(1) != 2 || h.dim(2) != config_.n_c || h.dim(3) != config_.n_t) {
    throw ShapeError("encode expects [b, 2, " + std::to_string(config_.n_c) + ", " + std::to_string(config_.n_t) +
                     "], got " + shape_str(h.shape()));
  }
  const std::size_t batch = h.dim(0);
  MacLabel scope("encoder");
  auto x = transformer_stage(encoder_.embed, encoder_.stb, h);
  {
    MacLabel s("conv");
    x = encoder_.conv.forward(x);
  }
  {
    MacLabel s("convt");
    x = encoder_.convt.forward(x);
  }
  MacLabel s("compress");
  return encoder_.compress.forward(reshape(x, {batch, config_.input_size()}));
}

template <typename T>
Tensor<T> StnetModel<T>::decode(const Tensor<T>& s) const {
  if (s.rank() != 2 || s.dim(1) != config_.codeword) {
    throw ShapeError("decode expects [b, " + std::to_string(config_.codeword) + "], got " + shape_str(s.shape()));
  }
  const std::size_t batch = s.dim(0);
  MacLabel scope("decoder");
  Tensor<T> grid;
  {
    MacLabel l("expand");
    grid = reshape(decoder_.expand.forward(s), {batch, 2, config_.n_c, config_.n_t});
  }
  Tensor<T> cnn;
  {
    MacLabel l("cnn");
    {
      MacLabel b("cr1");
      cnn = cr_block_forward(decoder_.cr1, grid);
    }
    MacLabel b("cr2");
    cnn = cr_block_forward(decoder_.cr2, cnn);
  }
  Tensor<T> transformer;
  {
    MacLabel l("transformer");
    transformer = transformer_stage(decoder_.embed, decoder_.stb, grid);
    MacLabel p("project");
    transformer = decoder_.project.forward(transformer);
  }
  MacLabel l("fusion");
  return sigmoid(decoder_.fusion.forward(add(cnn, transformer)));
}

#define STNET_INSTANTIATE(T)                                                                       \
  template struct StbWeights<T>;                                                                   \
  template struct CrBlockWeights<T>;                                                               \
  template Tensor<T> stb_forward<T>(const StbWeights<T>&, const AttentionConfig&, const Tensor<T>&); \
  template Tensor<T> cr_block_forward<T>(const CrBlockWeights<T>&, const Tensor<T>&);              \
  template class StnetModel<T>;

STNET_INSTANTIATE(float)
STNET_INSTANTIATE(double)
STNET_INSTANTIATE(long double)

#undef STNET_INSTANTIATE

}  // namespace stnet
