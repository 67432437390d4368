// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic per-sample cost of the forward pass. One MAC is two FLOPs; softmax
// and layer normalization cost five FLOPs per element. Activations, residual
// adds and reshapes are free.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stnet/attention.hpp"
#include "stnet/model.hpp"

namespace stnet {

inline constexpr std::uint64_t kFlopsPerMac = 2;
inline constexpr std::uint64_t kFlopsPerNormElement = 5;

struct FlopsEntry {
  std::string path;  // MAC entries use the same paths as MacCounter
  std::uint64_t macs = 0;
  std::uint64_t flops = 0;
};

struct FlopsReport {
  std::vector<FlopsEntry> entries;
  AttentionFlops encoder_attention;
  AttentionFlops decoder_attention;

  std::uint64_t total_macs() const;
  std::uint64_t total_flops() const;
  std::uint64_t macs_under(const std::string& prefix) const;
  std::uint64_t flops_under(const std::string& prefix) const;
  std::uint64_t encoder_macs() const { return macs_under("encoder/"); }
  std::uint64_t decoder_macs() const { return macs_under("decoder/"); }
  double encoder_share() const;
  /// MAC-bearing entries keyed by path.
  std::map<std::string, std::uint64_t> mac_map() const;
  /// Sum of the score, aggregate and projection MACs of one STB's attention.
  std::uint64_t attention_macs(const std::string& stb_prefix) const;
};

FlopsReport count_flops(const ModelConfig& config);

}  // namespace stnet
