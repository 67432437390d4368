// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/flops.hpp"

namespace stnet {

namespace {

using u64 = std::uint64_t;

class Builder {
 public:
  explicit Builder(FlopsReport& report) : report_(report) {}

  void macs(const std::string& path, u64 count) { report_.entries.push_back({path, count, count * kFlopsPerMac}); }
  void elementwise(const std::string& path, u64 elements) {
    report_.entries.push_back({path, 0, elements * kFlopsPerNormElement});
  }

  // Same-padded stride-1 conv on an h x w map.
  void conv(const std::string& path, u64 in, u64 out, u64 kh, u64 kw, u64 h, u64 w) {
    macs(path, h * w * out * in * kh * kw);
  }
  // Dense layer applied to `rows` tokens.
  void linear(const std::string& path, u64 rows, u64 in, u64 out) { macs(path, rows * in * out); }

  // Multi-head attention with batch `groups`, nq queries and nk keys per group.
  void attention(const std::string& path, u64 groups, u64 nq, u64 nk, u64 d, u64 heads) {
    const u64 dh = d / heads;
    linear(path + "/query", groups * nq, d, d);
    linear(path + "/key", groups * nk, d, d);
    linear(path + "/value", groups * nk, d, d);
    macs(path + "/score", groups * heads * nq * dh * nk);
    elementwise(path + "/softmax", groups * heads * nq * nk);
    macs(path + "/aggregate", groups * heads * nq * nk * dh);
    linear(path + "/output", groups * nq, d, d);
  }

  void stb(const std::string& path, const AttentionConfig& a) {
    const u64 L = a.grid, W = a.window, m = a.windows_per_side(), d = a.embed_dim, P = a.heads;
    const u64 tokens = L * L;
    attention(path + "/lsa", m * m, W * W, W * W, d, P);
    elementwise(path + "/norm1", tokens * d);
    linear(path + "/mlp1/fc1", tokens, d, d);
    linear(path + "/mlp1/fc2", tokens, d, d);
    elementwise(path + "/norm2", tokens * d);
    conv(path + "/gsa/subsample", d, d, W, W, m, m);
    attention(path + "/gsa", 1, tokens, m * m, d, P);
    elementwise(path + "/norm3", tokens * d);
    linear(path + "/mlp2/fc1", tokens, d, d);
    linear(path + "/mlp2/fc2", tokens, d, d);
    elementwise(path + "/norm4", tokens * d);
  }

  void cr_block(const std::string& path, u64 channels, u64 width, u64 h, u64 w) {
    conv(path + "/path_a", channels, width, 3, 3, h, w);
    conv(path + "/path_b1", channels, width, 1, 9, h, w);
    conv(path + "/path_b2", width, width, 9, 1, h, w);
    conv(path + "/fuse", 2 * width, channels, 1, 1, h, w);
  }

 private:
  FlopsReport& report_;
};

bool starts_with(const std::string& s, const std::string& prefix) { return s.compare(0, prefix.size(), prefix) == 0; }

}  // namespace

std::uint64_t FlopsReport::total_macs() const { return macs_under(""); }
std::uint64_t FlopsReport::total_flops() const { return flops_under(""); }

std::uint64_t FlopsReport::macs_under(const std::string& prefix) const {
  u64 total = 0;
  for (const auto& e : entries) {
    if (starts_with(e.path, prefix)) total += e.macs;
  }
  return total;
}

std::uint64_t FlopsReport::flops_under(const std::string& prefix) const {
  u64 total = 0;
  for (const auto& e : entries) {
    if (starts_with(e.path, prefix)) total += e.flops;
  }
  return total;
}

double FlopsReport::encoder_share() const {
  const auto total = total_macs();
  return total == 0 ? 0.0 : static_cast<double>(encoder_macs()) / static_cast<double>(total);
}

std::map<std::string, std::uint64_t> FlopsReport::mac_map() const {
  std::map<std::string, u64> out;
  for (const auto& e : entries) {
    if (e.macs > 0) out[e.path] += e.macs;
  }
  return out;
}

std::uint64_t FlopsReport::attention_macs(const std::string& stb_prefix) const {
  return macs_under(stb_prefix + "/lsa/") + macs_under(stb_prefix + "/gsa/");
}

FlopsReport count_flops(const ModelConfig& config) {
  config.validate();
  FlopsReport report;
  Builder b(report);
  const auto attn = config.attention();
  const u64 h = config.n_c, w = config.n_t, d = config.embed_dim, c = config.encoder_channels;
  const u64 n = config.input_size(), M = config.codeword;

  b.conv("encoder/embed", 2, d, 3, 3, h, w);
  b.stb("encoder/stb", attn);
  b.conv("encoder/conv", d, c, 3, 3, h, w);
  b.conv("encoder/convt", c, 2, 3, 3, h, w);  // stride 1: same cost as the forward conv
  b.linear("encoder/compress", 1, n, M);

  b.linear("decoder/expand", 1, M, n);
  b.cr_block("decoder/cnn/cr1", 2, config.cr_channels, h, w);
  b.cr_block("decoder/cnn/cr2", 2, config.cr_channels, h, w);
  b.conv("decoder/transformer/embed", 2, d, 3, 3, h, w);
  b.stb("decoder/transformer/stb", attn);
  b.conv("decoder/transformer/project", d, 2, 3, 3, h, w);
  b.conv("decoder/fusion", 2, 2, 3, 3, h, w);

  report.encoder_attention = attention_flops(attn);
  report.decoder_attention = report.encoder_attention;
  return report;
}

}  // namespace stnet
