// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stnet/errors.hpp"

namespace stnet {

namespace fs = std::filesystem;

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s, const fs::path& path) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw DataError(path.string() + ": bad number '" + s + "'");
  return v;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw DataError(path.string() + ": expected header '" + header + "'");
  }
  const auto columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != columns) throw DataError(path.string() + ": row has " + std::to_string(cells.size()) + " cells");
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

EvalRow eval_row(const EvalReport& report) {
  return {report.scenario, report.gamma.str(), report.nmse.db, report.nmse.samples};
}

std::vector<SeRow> se_rows(const std::vector<csi::SePoint>& curve, const std::string& method, const std::string& gamma) {
  std::vector<SeRow> rows;
  for (const auto& p : curve) rows.push_back({p.snr_db, p.se, method, gamma});
  return rows;
}

void write_eval_csv(const std::vector<EvalRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "scenario,gamma,nmse_db,samples\n";
  for (const auto& r : rows) out << r.scenario << ',' << r.gamma << ',' << num(r.nmse_db) << ',' << r.samples << '\n';
}

std::vector<EvalRow> read_eval_csv(const fs::path& path) {
  std::vector<EvalRow> rows;
  for (const auto& c : read_rows(path, "scenario,gamma,nmse_db,samples")) {
    rows.push_back({c[0], c[1], parse_double(c[2], path), static_cast<std::size_t>(parse_double(c[3], path))});
  }
  return rows;
}

void write_se_csv(const std::vector<SeRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "snr_db,se_bits_per_hz,method,gamma\n";
  for (const auto& r : rows) out << num(r.snr_db) << ',' << num(r.se_bits_per_hz) << ',' << r.method << ',' << r.gamma << '\n';
}

std::vector<SeRow> read_se_csv(const fs::path& path) {
  std::vector<SeRow> rows;
  for (const auto& c : read_rows(path, "snr_db,se_bits_per_hz,method,gamma")) {
    rows.push_back({parse_double(c[0], path), parse_double(c[1], path), c[2], c[3]});
  }
  return rows;
}

void write_history_csv(const TrainHistory& history, const fs::path& path) {
  auto out = open_out(path);
  out << "epoch,steps,train_loss,val_nmse_db,seconds\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.steps << ',' << num(e.train_loss) << ',' << (e.val_nmse_db ? num(*e.val_nmse_db) : "")
        << ',' << num(e.seconds) << '\n';
  }
}

void write_flops_csv(const FlopsReport& report, const fs::path& path) {
  auto out = open_out(path);
  out << "path,macs,flops\n";
  for (const auto& e : report.entries) out << e.path << ',' << e.macs << ',' << e.flops << '\n';
  out << "encoder," << report.encoder_macs() << ',' << report.flops_under("encoder/") << '\n';
  out << "decoder," << report.decoder_macs() << ',' << report.flops_under("decoder/") << '\n';
  out << "total," << report.total_macs() << ',' << report.total_flops() << '\n';
}

void write_svg_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const fs::path& path) {
  constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
      << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(std::round(xv * 100) / 100)
        << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(std::round(yv * 100) / 100)
        << "</text>\n";
    out << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
        << "\" stroke=\"#ddd\"/>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
      << escape_xml(x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    out << "<line x1=\"" << kLeft + pw + 10 << "\" x2=\"" << kLeft + pw + 30 << "\" y1=\"" << ly << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + pw + 35 << "\" y=\"" << ly + 4 << "\">" << escape_xml(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace stnet
