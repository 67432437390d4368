// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

#include "stnet/errors.hpp"

namespace stnet::data {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace fs = std::filesystem;

// ---- normalization ----------------------------------------------------------

void Normalization::validate() const {
  if (!std::isfinite(min) || !std::isfinite(max) || !(min < max)) {
    throw DegenerateRangeError("degenerate normalization range [" + std::to_string(min) + ", " +
                               std::to_string(max) + "]");
  }
}

Normalization Normalization::symmetric(std::span<const double> values) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  Normalization n{-peak, peak};
  n.validate();
  return n;
}

Normalization Normalization::fit(std::span<const double> values) {
  if (values.empty()) throw DegenerateRangeError("cannot fit a normalization to no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  Normalization n{*lo, *hi};
  n.validate();
  return n;
}

void normalize(std::span<double> values, const Normalization& norm) {
  norm.validate();
  for (auto& v : values) v = norm.normalize(v);
}

void denormalize(std::span<double> values, const Normalization& norm) {
  norm.validate();
  for (auto& v : values) v = norm.denormalize(v);
}

// ---- Dataset ----------------------------------------------------------------

std::span<const float> Dataset::sample(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("sample index " + std::to_string(i) + " out of range");
  return std::span<const float>(values).subspan(i * sample_size(), sample_size());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.n_c = n_c;
  out.n_t = n_t;
  out.meta = meta;
  out.values.reserve(indices.size() * sample_size());
  for (auto i : indices) {
    auto s = sample(i);
    out.values.insert(out.values.end(), s.begin(), s.end());
  }
  return out;
}

csi::AngularDelayChannel Dataset::channel(std::size_t i) const {
  csi::AngularDelayChannel ch;
  ch.n_c = n_c;
  ch.n_t = n_t;
  auto s = sample(i);
  ch.planes.assign(s.begin(), s.end());
  denormalize(ch.planes, meta.norm);
  return ch;
}

// ---- container --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', 'B'};
constexpr std::size_t kHeaderBytes = 28;

template <typename U>
void put(std::string& buf, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  buf.append(bytes, sizeof(U));
}

template <typename U>
U get(const char* p) {
  U value;
  std::memcpy(&value, p, sizeof(U));
  return value;
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

nlohmann::json meta_to_json(const DatasetMeta& m) {
  return {{"normalization", {{"min", m.norm.min}, {"max", m.norm.max}}},
          {"scenario", m.scenario},
          {"source", m.source},
          {"split", m.split},
          {"seed", m.seed},
          {"n_sub", m.n_sub}};
}

DatasetMeta meta_from_json(const nlohmann::json& j) {
  DatasetMeta m;
  m.norm.min = j.at("normalization").at("min").get<double>();
  m.norm.max = j.at("normalization").at("max").get<double>();
  m.scenario = j.value("scenario", m.scenario);
  m.source = j.value("source", m.source);
  m.split = j.value("split", m.split);
  m.seed = j.value("seed", m.seed);
  m.n_sub = j.value("n_sub", m.n_sub);
  return m;
}

}  // namespace

void write_container(const Dataset& dataset, const fs::path& path) {
  if (dataset.values.size() % dataset.sample_size() != 0) {
    throw DimensionMismatchError(std::to_string(dataset.values.size()) + " values are not a whole number of [2, " +
                                 std::to_string(dataset.n_c) + ", " + std::to_string(dataset.n_t) + "] samples");
  }
  std::string buf;
  buf.reserve(kHeaderBytes + dataset.values.size() * sizeof(float));
  buf.append(kMagic, 4);
  put<std::uint32_t>(buf, kContainerVersion);
  put<std::uint64_t>(buf, dataset.size());
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(dataset.n_c));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(dataset.n_t));
  put<std::uint32_t>(buf, kDtypeF32);
  buf.append(reinterpret_cast<const char*>(dataset.values.data()), dataset.values.size() * sizeof(float));
  write_file(path, buf);
  write_file(sidecar_path(path), meta_to_json(dataset.meta).dump(2) + "\n");
}

Dataset read_container(const fs::path& path, std::optional<Dims> expect) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError(path.string() + ": bad magic, not a CSIB container");
  }
  if (bytes.size() < kHeaderBytes) throw TruncatedFileError(path.string() + ": truncated header");
  const auto version = get<std::uint32_t>(bytes.data() + 4);
  if (version != kContainerVersion) {
    throw DataError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(bytes.data() + 8);
  Dataset ds;
  ds.n_c = get<std::uint32_t>(bytes.data() + 16);
  ds.n_t = get<std::uint32_t>(bytes.data() + 20);
  const auto dtype = get<std::uint32_t>(bytes.data() + 24);
  if (dtype != kDtypeF32) throw DataError(path.string() + ": unsupported dtype code " + std::to_string(dtype));
  if (ds.n_c == 0 || ds.n_t == 0) throw DimensionMismatchError(path.string() + ": zero channel dimension");
  if (expect && (expect->n_c != ds.n_c || expect->n_t != ds.n_t)) {
    throw DimensionMismatchError(path.string() + ": holds " + std::to_string(ds.n_c) + "x" + std::to_string(ds.n_t) +
                                 " samples, expected " + std::to_string(expect->n_c) + "x" +
                                 std::to_string(expect->n_t));
  }
  const std::size_t payload = bytes.size() - kHeaderBytes;
  const std::size_t needed = count * ds.sample_size() * sizeof(float);
  if (payload < needed) {
    throw TruncatedFileError(path.string() + ": payload has " + std::to_string(payload) + " bytes, header needs " +
                             std::to_string(needed));
  }
  if (payload > needed) {
    throw DimensionMismatchError(path.string() + ": " + std::to_string(payload - needed) +
                                 " trailing bytes beyond the declared samples");
  }
  ds.values.resize(count * ds.sample_size());
  std::memcpy(ds.values.data(), bytes.data() + kHeaderBytes, needed);
  const auto side = sidecar_path(path);
  if (fs::exists(side)) {
    try {
      ds.meta = meta_from_json(nlohmann::json::parse(read_file(side)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(side.string() + ": malformed sidecar: " + e.what());
    }
  }
  return ds;
}

// ---- flat import/export -----------------------------------------------------

namespace {

struct FlatArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

FlatArray read_npy(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) throw BadMagicError(path.string() + ": not an .npy file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = get<std::uint16_t>(bytes.data() + 8);
    offset = 10;
  } else {
    if (bytes.size() < 12) throw TruncatedFileError(path.string() + ": truncated .npy header");
    header_len = get<std::uint32_t>(bytes.data() + 8);
    offset = 12;
  }
  if (bytes.size() < offset + header_len) throw TruncatedFileError(path.string() + ": truncated .npy header");
  const std::string header = bytes.substr(offset, header_len);
  offset += header_len;

  auto field = [&](const std::string& key) {
    const auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw DataError(path.string() + ": .npy header lacks " + key);
    return header.substr(header.find(':', k) + 1);
  };
  const std::string descr = field("descr");
  std::size_t width = 0;
  if (descr.find("<f4") != std::string::npos) {
    width = 4;
  } else if (descr.find("<f8") != std::string::npos) {
    width = 8;
  } else {
    throw DataError(path.string() + ": unsupported .npy dtype (need <f4 or <f8)");
  }
  if (field("fortran_order").find("True") < field("fortran_order").find(',')) {
    throw DataError(path.string() + ": Fortran-ordered .npy arrays are not supported");
  }
  const std::string shape_text = field("shape");
  const auto open = shape_text.find('('), close = shape_text.find(')');
  std::vector<std::size_t> shape;
  std::stringstream ss(shape_text.substr(open + 1, close - open - 1));
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.find_first_of("0123456789") != std::string::npos) shape.push_back(std::stoull(item));
  }
  if (shape.empty()) throw DimensionMismatchError(path.string() + ": scalar .npy array");
  FlatArray arr;
  arr.rows = shape[0];
  arr.cols = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) arr.cols *= shape[i];
  const std::size_t count = arr.rows * arr.cols;
  if (bytes.size() - offset < count * width) throw TruncatedFileError(path.string() + ": truncated .npy payload");
  arr.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = bytes.data() + offset + i * width;
    arr.values[i] = width == 4 ? static_cast<double>(get<float>(p)) : get<double>(p);
  }
  return arr;
}

FlatArray read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  FlatArray arr;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t cols = 0;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        arr.values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": unparsable value '" + cell + "' on row " + std::to_string(arr.rows));
      }
      ++cols;
    }
    if (arr.rows == 0) arr.cols = cols;
    if (cols != arr.cols) {
      throw DimensionMismatchError(path.string() + ": row " + std::to_string(arr.rows) + " has " +
                                   std::to_string(cols) + " values, expected " + std::to_string(arr.cols));
    }
    ++arr.rows;
  }
  return arr;
}

std::string extension(const fs::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

}  // namespace

Dataset import_cost2100(const fs::path& source, const std::string& split, const std::string& scenario, Dims dims) {
  const auto ext = extension(source);
  FlatArray arr;
  if (ext == ".npy") {
    arr = read_npy(source);
  } else if (ext == ".csv") {
    arr = read_csv(source);
  } else {
    throw DataError(source.string() + ": unsupported import format '" + ext + "' (use .npy or .csv)");
  }
  const std::size_t expected = 2 * dims.n_c * dims.n_t;
  if (arr.rows > 0 && arr.cols != expected) {
    throw DimensionMismatchError(source.string() + ": vector length " + std::to_string(arr.cols) + ", expected " +
                                 std::to_string(expected));
  }
  std::size_t bad = 0, first_bad = 0;
  for (std::size_t i = 0; i < arr.values.size(); ++i) {
    const double v = arr.values[i];
    if (!(v >= -0.1 && v <= 1.1)) {
      if (bad++ == 0) first_bad = i;
    }
  }
  if (bad > 0) {
    throw ValueRangeError(source.string() + ": " + std::to_string(bad) + " values outside [-0.1, 1.1]; first at sample " +
                          std::to_string(first_bad / expected) + ", element " + std::to_string(first_bad % expected) +
                          " (value " + std::to_string(arr.values[first_bad]) + ")");
  }
  Dataset ds;
  ds.n_c = dims.n_c;
  ds.n_t = dims.n_t;
  ds.values.assign(arr.values.begin(), arr.values.end());
  ds.meta.norm = {-0.5, 0.5};
  ds.meta.scenario = scenario;
  ds.meta.source = source.string();
  ds.meta.split = split;
  return ds;
}

void export_flat(const Dataset& dataset, const fs::path& path) {
  const auto ext = extension(path);
  if (ext == ".csv") {
    std::ostringstream os;
    os.precision(9);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      auto s = dataset.sample(i);
      for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k];
      os << '\n';
    }
    write_file(path, os.str());
    return;
  }
  if (ext != ".npy") throw DataError(path.string() + ": unsupported export format '" + ext + "'");
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(dataset.size()) + ", " +
                       std::to_string(dataset.sample_size()) + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::string buf("\x93NUMPY\x01\x00", 8);
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(header.size()));
  buf += header;
  buf.append(reinterpret_cast<const char*>(dataset.values.data()), dataset.values.size() * sizeof(float));
  write_file(path, buf);
}

// ---- synthetic channels -----------------------------------------------------

void SynthConfig::validate() const {
  if (samples == 0) throw std::invalid_argument("synthetic data needs at least one sample");
  if (paths == 0) throw std::invalid_argument("synthetic channels need at least one path");
  if (n_c == 0 || n_t == 0 || n_sub < n_c) throw std::invalid_argument("synthetic dims need 0 < n_c <= n_sub");
  if (max_delay == 0 || max_delay > n_c) {
    throw std::invalid_argument("max delay " + std::to_string(max_delay) + " must lie in [1, n_c]");
  }
  if (fixed_path && fixed_path->first >= n_c) throw std::invalid_argument("fixed path delay must be below n_c");
  if (!(delay_decay > 0.0)) throw std::invalid_argument("delay decay constant must be positive");
}

SynthResult synth_channels(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> delay_dist(0, config.max_delay - 1);
  std::uniform_real_distribution<double> angle_dist(-config.max_angle_deg, config.max_angle_deg);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthResult result;
  std::vector<double> planes;
  planes.reserve(config.samples * 2 * config.n_c * config.n_t);
  const double two_pi = 2.0 * M_PI;
  for (std::size_t s = 0; s < config.samples; ++s) {
    std::vector<std::size_t> delays(config.paths);
    std::vector<double> sines(config.paths);
    std::vector<std::complex<double>> gains(config.paths);
    double total_power = 0.0;
    for (std::size_t p = 0; p < config.paths; ++p) {
      double angle_deg;
      if (config.fixed_path) {
        delays[p] = config.fixed_path->first;
        angle_deg = config.fixed_path->second;
      } else {
        delays[p] = delay_dist(rng);
        angle_deg = angle_dist(rng);
      }
      sines[p] = std::sin(angle_deg * M_PI / 180.0);
      const double power = std::exp(-static_cast<double>(delays[p]) / config.delay_decay);
      const double re = gauss(rng), im = gauss(rng);
      gains[p] = std::sqrt(power / 2.0) * std::complex<double>(re, im);
      total_power += std::norm(gains[p]);
    }
    const double scale = total_power > 0.0 ? 1.0 / std::sqrt(total_power) : 1.0;
    csi::FreqChannel h = csi::FreqChannel::Zero(static_cast<Eigen::Index>(config.n_sub),
                                                static_cast<Eigen::Index>(config.n_t));
    for (std::size_t p = 0; p < config.paths; ++p) {
      for (std::size_t n = 0; n < config.n_sub; ++n) {
        const double delay_phase =
            two_pi * static_cast<double>((n * delays[p]) % config.n_sub) / static_cast<double>(config.n_sub);
        const auto delay_term = std::polar(1.0, delay_phase) * gains[p] * scale;
        for (std::size_t t = 0; t < config.n_t; ++t) {
          h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t)) +=
              delay_term * std::polar(1.0, -M_PI * static_cast<double>(t) * sines[p]);
        }
      }
    }
    auto ad = csi::to_angular_delay(h, config.n_c);
    planes.insert(planes.end(), ad.planes.begin(), ad.planes.end());
    if (config.keep_channels) result.channels.push_back(std::move(h));
  }

  Dataset& ds = result.dataset;
  ds.n_c = config.n_c;
  ds.n_t = config.n_t;
  ds.meta.norm = Normalization::symmetric(planes);
  ds.meta.scenario = "synthetic";
  ds.meta.source = "synth";
  ds.meta.seed = config.seed;
  ds.meta.n_sub = config.n_sub;
  normalize(planes, ds.meta.norm);
  ds.values.assign(planes.begin(), planes.end());
  return result;
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed) {
  if (fractions.empty()) throw std::invalid_argument("split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be non-negative");
    total += f;
  }
  if (!(total > 0.0)) throw std::invalid_argument("split fractions sum to zero");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const std::size_t count = i + 1 == fractions.size()
                                  ? n - start
                                  : std::min(n - start, static_cast<std::size_t>(std::floor(
                                                            static_cast<double>(n) * fractions[i] / total)));
    parts.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(start + count));
    start += count;
  }
  return parts;
}

}  // namespace stnet::data
