// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// CSV and SVG output. CSV schemas:
//   eval     scenario,gamma,nmse_db,samples
//   se       snr_db,se_bits_per_hz,method,gamma
//   history  epoch,steps,train_loss,val_nmse_db,seconds
//   flops    path,macs,flops

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stnet/csi.hpp"
#include "stnet/flops.hpp"
#include "stnet/train.hpp"

namespace stnet {

struct EvalRow {
  std::string scenario;
  std::string gamma;  // "1/4"
  double nmse_db = 0.0;
  std::size_t samples = 0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct SeRow {
  double snr_db = 0.0;
  double se_bits_per_hz = 0.0;
  std::string method;
  std::string gamma;

  friend bool operator==(const SeRow&, const SeRow&) = default;
};

EvalRow eval_row(const EvalReport& report);
std::vector<SeRow> se_rows(const std::vector<csi::SePoint>& curve, const std::string& method, const std::string& gamma);

void write_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path);
std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path);
void write_se_csv(const std::vector<SeRow>& rows, const std::filesystem::path& path);
std::vector<SeRow> read_se_csv(const std::filesystem::path& path);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
void write_flops_csv(const FlopsReport& report, const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal line chart with axes, tick labels and a legend.
void write_svg_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::filesystem::path& path);

}  // namespace stnet
