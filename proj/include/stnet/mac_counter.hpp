// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace stnet {

/// Instrumented multiply-accumulate counter. While a counter is installed on
/// the current thread, matmul/linear/conv kernels report their MACs under the
/// active label path ("encoder/stb/lsa/score").
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  const std::map<std::string, std::uint64_t>& macs() const { return macs_; }
  std::uint64_t total() const;
  /// Sum over labels starting with `prefix`.
  std::uint64_t total_under(const std::string& prefix) const;

  static void record(std::uint64_t macs);
  static std::string current_label();

 private:
  friend class MacLabel;
  std::map<std::string, std::uint64_t> macs_;
  std::vector<std::string> labels_;
  MacCounter* previous_;
};

/// Pushes one component onto the label path while alive. No-op when no
/// counter is installed.
class MacLabel {
 public:
  explicit MacLabel(const std::string& component);
  ~MacLabel();
  MacLabel(const MacLabel&) = delete;
  MacLabel& operator=(const MacLabel&) = delete;

 private:
  bool pushed_ = false;
};

}  // namespace stnet
