// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/csi.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace stnet::csi {

Eigen::MatrixXcd AngularDelayChannel::to_complex() const {
  if (planes.size() != 2 * n_c * n_t) throw std::invalid_argument("angular-delay planes do not match dimensions");
  Eigen::MatrixXcd m(n_c, n_t);
  for (std::size_t r = 0; r < n_c; ++r) {
    for (std::size_t c = 0; c < n_t; ++c) {
      m(r, c) = {planes[r * n_t + c], planes[n_c * n_t + r * n_t + c]};
    }
  }
  return m;
}

AngularDelayChannel AngularDelayChannel::from_complex(const Eigen::MatrixXcd& m) {
  AngularDelayChannel out;
  out.n_c = static_cast<std::size_t>(m.rows());
  out.n_t = static_cast<std::size_t>(m.cols());
  out.planes.resize(2 * out.n_c * out.n_t);
  for (std::size_t r = 0; r < out.n_c; ++r) {
    for (std::size_t c = 0; c < out.n_t; ++c) {
      out.planes[r * out.n_t + c] = m(r, c).real();
      out.planes[out.n_c * out.n_t + r * out.n_t + c] = m(r, c).imag();
    }
  }
  return out;
}

Eigen::MatrixXcd unitary_dft(std::size_t n) {
  Eigen::MatrixXcd f(n, n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      // Reduce k*i mod n first so the phase stays accurate for large n.
      const double phase = -2.0 * M_PI * static_cast<double>((k * i) % n) / static_cast<double>(n);
      f(k, i) = std::polar(norm, phase);
    }
  }
  return f;
}

namespace {

const Eigen::MatrixXcd& cached_dft(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<Eigen::MatrixXcd>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Eigen::MatrixXcd>(unitary_dft(n));
  return *slot;
}

}  // namespace

Eigen::MatrixXcd angular_delay_full(const FreqChannel& h) {
  return cached_dft(h.rows()) * h * cached_dft(h.cols()).adjoint();
}

AngularDelayChannel to_angular_delay(const FreqChannel& h, std::size_t n_c) {
  const auto n_sub = static_cast<std::size_t>(h.rows());
  if (n_c == 0 || n_c > n_sub) {
    throw std::invalid_argument("truncation to " + std::to_string(n_c) + " rows out of range for " +
                                std::to_string(n_sub) + " sub-carriers");
  }
  // Only the kept delay rows of F_d are needed.
  const auto rows = static_cast<Eigen::Index>(n_c);
  return AngularDelayChannel::from_complex(cached_dft(n_sub).topRows(rows) * h * cached_dft(h.cols()).adjoint());
}

FreqChannel from_angular_delay(const AngularDelayChannel& h, std::size_t n_sub) {
  if (n_sub < h.n_c) {
    throw std::invalid_argument("cannot rebuild " + std::to_string(n_sub) + " sub-carriers from " +
                                std::to_string(h.n_c) + " delay rows");
  }
  const auto rows = static_cast<Eigen::Index>(h.n_c);
  return cached_dft(n_sub).topRows(rows).adjoint() * h.to_complex() * cached_dft(h.n_t);
}

Ratio compression_ratio(std::size_t codeword, std::size_t n_c, std::size_t n_t) {
  if (codeword == 0 || n_c == 0 || n_t == 0) throw std::invalid_argument("compression ratio needs positive sizes");
  return Ratio::make(codeword, 2 * n_c * n_t);
}

void PrecodingScenario::validate() const {
  if (true_channels.empty()) throw std::invalid_argument("precoding scenario has no users");
  if (estimated_channels.size() != true_channels.size()) {
    throw std::invalid_argument("estimated and true channel user counts differ");
  }
  const auto rows = true_channels[0].rows(), cols = true_channels[0].cols();
  if (static_cast<Eigen::Index>(users()) > cols) {
    throw std::invalid_argument(std::to_string(users()) + " users exceed " + std::to_string(cols) + " antennas");
  }
  for (std::size_t k = 0; k < users(); ++k) {
    if (true_channels[k].rows() != rows || true_channels[k].cols() != cols ||
        estimated_channels[k].rows() != rows || estimated_channels[k].cols() != cols) {
      throw std::invalid_argument("user " + std::to_string(k) + " channel dimensions are inconsistent");
    }
  }
}

ZfResult zf_spectral_efficiency(const PrecodingScenario& scenario, std::span<const double> snr_db) {
  scenario.validate();
  const auto users = static_cast<Eigen::Index>(scenario.users());
  const auto n_sub = scenario.true_channels[0].rows();
  const auto antennas = scenario.true_channels[0].cols();

  ZfResult result;
  std::vector<double> se_sum(snr_db.size(), 0.0);
  Eigen::MatrixXcd g(users, antennas), g_est(users, antennas);
  for (Eigen::Index n = 0; n < n_sub; ++n) {
    for (Eigen::Index k = 0; k < users; ++k) {
      g.row(k) = scenario.true_channels[static_cast<std::size_t>(k)].row(n);
      g_est.row(k) = scenario.estimated_channels[static_cast<std::size_t>(k)].row(n);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(g_est);
    Eigen::MatrixXcd v;
    if (cod.rank() < users) {
      result.pinv_fallback = true;
      v = cod.pseudoInverse();
    } else {
      const Eigen::MatrixXcd gram = g_est * g_est.adjoint();
      v = g_est.adjoint() * gram.ldlt().solve(Eigen::MatrixXcd::Identity(users, users));
    }
    const double column_power = 1.0 / static_cast<double>(users);
    for (Eigen::Index j = 0; j < users; ++j) {
      const double norm = v.col(j).norm();
      if (norm > 0.0) v.col(j) *= std::sqrt(column_power) / norm;
    }
    const Eigen::MatrixXd gains = (g * v).cwiseAbs2();
    for (Eigen::Index k = 0; k < users; ++k) {
      for (Eigen::Index j = 0; j < users; ++j) {
        if (j != k) result.max_interference = std::max(result.max_interference, gains(k, j));
      }
    }
    for (std::size_t s = 0; s < snr_db.size(); ++s) {
      const double noise = std::pow(10.0, -snr_db[s] / 10.0);
      double rate = 0.0;
      for (Eigen::Index k = 0; k < users; ++k) {
        double interference = 0.0;
        for (Eigen::Index j = 0; j < users; ++j) {
          if (j != k) interference += gains(k, j);
        }
        rate += std::log2(1.0 + gains(k, k) / (interference + noise));
      }
      se_sum[s] += rate;
    }
  }
  for (std::size_t s = 0; s < snr_db.size(); ++s) {
    result.curve.push_back({snr_db[s], se_sum[s] / static_cast<double>(n_sub)});
  }
  return result;
}

}  // namespace stnet::csi
