// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Channel-domain math: the angular-delay transform H_bar = F_d H F_a^H with
// unitary DFT matrices, delay-row truncation, real/imag plane packing, and
// zero-forcing spectral efficiency.

#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "stnet/ratio.hpp"

namespace stnet::csi {

/// Sub-carriers x antennas; row n is h_n^H.
using FreqChannel = Eigen::MatrixXcd;

/// Real tensor [2, n_c, n_t]: plane 0 real part, plane 1 imaginary part.
struct AngularDelayChannel {
  std::size_t n_c = 0;
  std::size_t n_t = 0;
  std::vector<double> planes;

  Eigen::MatrixXcd to_complex() const;
  static AngularDelayChannel from_complex(const Eigen::MatrixXcd& m);
};

/// F[k][n] = exp(-j 2 pi k n / N) / sqrt(N)
Eigen::MatrixXcd unitary_dft(std::size_t n);

/// Untruncated angular-delay matrix F_d H F_a^H.
Eigen::MatrixXcd angular_delay_full(const FreqChannel& h);

/// Keeps delay rows [0, n_c) and splits real/imaginary planes.
AngularDelayChannel to_angular_delay(const FreqChannel& h, std::size_t n_c);

/// Zero-pads rows n_c..n_sub-1 and inverts both transforms.
FreqChannel from_angular_delay(const AngularDelayChannel& h, std::size_t n_sub);

/// gamma = M / (2 Nc Nt)
Ratio compression_ratio(std::size_t codeword, std::size_t n_c, std::size_t n_t);

/// K users; each channel is sub-carriers x antennas. Row n of user k's matrix
/// is that user's channel on sub-carrier n.
struct PrecodingScenario {
  std::vector<FreqChannel> true_channels;
  std::vector<FreqChannel> estimated_channels;

  std::size_t users() const { return true_channels.size(); }
  void validate() const;
};

struct SePoint {
  double snr_db = 0.0;
  double se = 0.0;  // bits/s/Hz
};

struct ZfResult {
  std::vector<SePoint> curve;
  /// Set when some sub-carrier's estimated channel lost row rank and the
  /// precoder fell back to a pseudo-inverse.
  bool pinv_fallback = false;
  /// Largest |h_k v_j|^2 over sub-carriers and k != j, on the true channels.
  double max_interference = 0.0;
};

/// Precoder V = H_est^H (H_est H_est^H)^-1 with unit-norm columns scaled to
/// total power 1; SINR evaluated on the true channels with unit-power symbols
/// and noise power 10^(-snr/10). SE is the mean over sub-carriers of
/// sum_k log2(1 + SINR_k).
ZfResult zf_spectral_efficiency(const PrecodingScenario& scenario, std::span<const double> snr_db);

}  // namespace stnet::csi
