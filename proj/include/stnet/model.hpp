// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// STNet autoencoder.
//
//   encoder  H [b,2,Nc,Nt] -> conv3x3 2->d -> STB -> conv3x3 d->c -> convT3x3 c->2
//            -> flatten -> linear 2NcNt->M
//   decoder  s [b,M] -> linear M->2NcNt -> reshape
//            -> (CR block -> CR block) + (conv3x3 2->d -> STB -> conv3x3 d->2)
//            -> conv3x3 2->2 -> sigmoid
//
// STB: LSA, add & norm, MLP, add & norm, GSA, add & norm, MLP, add & norm.
// CR block: (3x3) || (1x9 -> 9x1), concat, 1x1 fuse, identity skip.

#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "stnet/attention.hpp"
#include "stnet/layers.hpp"
#include "stnet/ratio.hpp"

namespace stnet {

struct ModelConfig {
  std::size_t n_c = 32;
  std::size_t n_t = 32;
  std::size_t codeword = 512;  // M
  std::size_t embed_dim = 4;
  std::size_t window = 8;
  std::size_t heads = 4;
  std::size_t encoder_channels = 4;  // width between the encoder's conv and convT
  std::size_t cr_channels = 5;       // internal width of each CR block path
  std::uint64_t seed = 1;

  std::size_t input_size() const { return 2 * n_c * n_t; }
  Ratio gamma() const;
  AttentionConfig attention() const;
  void validate() const;

  /// Sets M = gamma * 2 * Nc * Nt; throws if that is not a positive integer.
  ModelConfig& set_gamma(const Ratio& gamma);
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct StbWeights {
  MhaWeights<T> lsa;
  LayerNorm<T> norm1;
  Mlp<T> mlp1;
  LayerNorm<T> norm2;
  GsaWeights<T> gsa;
  LayerNorm<T> norm3;
  Mlp<T> mlp2;
  LayerNorm<T> norm4;

  static StbWeights create(ParamStore<T>& store, const std::string& name, const AttentionConfig& config, Rng& rng);
};

/// x [b, L, L, d] -> same shape.
template <typename T>
Tensor<T> stb_forward(const StbWeights<T>& weights, const AttentionConfig& config, const Tensor<T>& x);

template <typename T>
struct CrBlockWeights {
  Conv2d<T> path_a;   // 3x3 c->k
  Conv2d<T> path_b1;  // 1x9 c->k
  Conv2d<T> path_b2;  // 9x1 k->k
  Conv2d<T> fuse;     // 1x1 2k->c

  static CrBlockWeights create(ParamStore<T>& store, const std::string& name, std::size_t channels,
                               std::size_t width, Rng& rng);
};

/// x [b, c, h, w] -> same shape.
template <typename T>
Tensor<T> cr_block_forward(const CrBlockWeights<T>& weights, const Tensor<T>& x);

template <typename T>
class StnetModel {
 public:
  explicit StnetModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ParamStore<T>& params() const { return store_; }
  const std::vector<Tensor<T>>& parameters() const { return store_.tensors(); }

  /// [b, 2, Nc, Nt] -> [b, M]
  Tensor<T> encode(const Tensor<T>& h) const;
  /// [b, M] -> [b, 2, Nc, Nt], values in (0, 1)
  Tensor<T> decode(const Tensor<T>& s) const;
  Tensor<T> forward(const Tensor<T>& h) const { return decode(encode(h)); }

  /// Copies parameter values by path from a model with the same config.
  template <typename U>
  void copy_from(const StnetModel<U>& other) {
    for (auto t : store_.tensors()) {
      auto src = other.params().find(t.name()).values();
      if (src.size() != t.numel()) throw ShapeError("parameter '" + t.name() + "' size mismatch");
      auto dst = t.mutable_values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
  }

  struct Encoder {
    Conv2d<T> embed;
    StbWeights<T> stb;
    Conv2d<T> conv;
    ConvTranspose2d<T> convt;
    Linear<T> compress;
  };
  struct Decoder {
    Linear<T> expand;
    CrBlockWeights<T> cr1;
    CrBlockWeights<T> cr2;
    Conv2d<T> embed;
    StbWeights<T> stb;
    Conv2d<T> project;
    Conv2d<T> fusion;
  };

  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }

 private:
  Tensor<T> transformer_stage(const Conv2d<T>& embed, const StbWeights<T>& stb, const Tensor<T>& x) const;

  ModelConfig config_;
  ParamStore<T> store_;
  Encoder encoder_;
  Decoder decoder_;
};

}  // namespace stnet
