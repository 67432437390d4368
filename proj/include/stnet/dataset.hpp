// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary container (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "CSIB"
//   4       4     u32 version (1)
//   8       8     u64 sample_count
//   16      4     u32 N_c
//   20      4     u32 N_t
//   24      4     u32 dtype code (1 = f32 little-endian)
//   28      ...   payload, sample_count x [2, N_c, N_t] row-major
//
// Normalization and scenario metadata live in a JSON sidecar at "<path>.json".

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stnet/csi.hpp"

namespace stnet::data {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;

/// Affine map between physical values and [0, 1].
struct Normalization {
  double min = -0.5;
  double max = 0.5;

  double normalize(double x) const { return (x - min) / (max - min); }
  double denormalize(double y) const { return y * (max - min) + min; }
  /// Throws DegenerateRangeError unless min < max, both finite.
  void validate() const;
  /// Symmetric range [-a, a] with a = max |x|, so zero maps to 0.5.
  static Normalization symmetric(std::span<const double> values);
  /// Tight range [min x, max x].
  static Normalization fit(std::span<const double> values);
};

void normalize(std::span<double> values, const Normalization& norm);
void denormalize(std::span<double> values, const Normalization& norm);

struct DatasetMeta {
  Normalization norm;
  std::string scenario = "synthetic";  // "indoor", "outdoor" or "synthetic"
  std::string source;
  std::string split;
  std::uint64_t seed = 0;
  std::size_t n_sub = 0;  // sub-carriers before truncation; 0 when unknown
};

struct Dataset {
  std::size_t n_c = 32;
  std::size_t n_t = 32;
  std::vector<float> values;  // normalized, sample-major
  DatasetMeta meta;

  std::size_t sample_size() const { return 2 * n_c * n_t; }
  std::size_t size() const { return values.size() / sample_size(); }
  std::span<const float> sample(std::size_t i) const;
  /// Samples `indices`, in order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Physical (de-normalized) angular-delay channel of sample i.
  csi::AngularDelayChannel channel(std::size_t i) const;
};

struct Dims {
  std::size_t n_c;
  std::size_t n_t;
};

void write_container(const Dataset& dataset, const std::filesystem::path& path);
/// Throws BadMagicError, TruncatedFileError or DimensionMismatchError.
Dataset read_container(const std::filesystem::path& path, std::optional<Dims> expect = std::nullopt);

/// Reads per-sample flattened vectors of length 2*Nc*Nt from .npy (f4/f8,
/// shape [N, 2*Nc*Nt] or [N, 2, Nc, Nt]) or .csv (one sample per line).
/// Values are taken as already normalized; anything outside [-0.1, 1.1] is
/// rejected with a ValueRangeError naming the count and first offender.
Dataset import_cost2100(const std::filesystem::path& source, const std::string& split,
                        const std::string& scenario, Dims dims = {32, 32});

/// Writes samples back as flattened vectors (.npy or .csv by extension).
void export_flat(const Dataset& dataset, const std::filesystem::path& path);

struct SynthConfig {
  std::size_t samples = 1000;
  std::size_t paths = 4;
  std::size_t n_sub = 256;      // sub-carriers before truncation
  std::size_t n_c = 32;         // kept delay rows
  std::size_t n_t = 32;         // antennas (half-wavelength ULA)
  std::size_t max_delay = 16;   // integer delays drawn from [0, max_delay)
  double delay_decay = 4.0;     // exponential power-delay profile constant
  double max_angle_deg = 60.0;  // departure angles uniform in [-a, a]
  std::uint64_t seed = 7;
  bool keep_channels = false;
  /// Fixed single-path geometry used by tests: delay and angle of every path.
  std::optional<std::pair<std::size_t, double>> fixed_path;

  void validate() const;
};

struct SynthResult {
  Dataset dataset;
  std::vector<csi::FreqChannel> channels;  // only when keep_channels
};

/// H(n, t) = sum_p a_p exp(+j 2 pi n tau_p / N_sub) exp(-j pi t sin theta_p),
/// a_p complex Gaussian with exponential power-delay profile. Transformed,
/// truncated and normalized to [0, 1] with a symmetric range.
SynthResult synth_channels(const SynthConfig& config);

/// Disjoint seeded partition of [0, n) with sizes proportional to `fractions`;
/// the last part takes the rounding remainder.
std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed);

}  // namespace stnet::data
