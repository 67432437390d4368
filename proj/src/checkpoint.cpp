// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <sstream>

#include "stnet/errors.hpp"
#include "stnet/train.hpp"

namespace stnet {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"max_steps", c.max_steps},
                     {"lr", c.lr},
                     {"seed", c.seed},
                     {"validate_every", c.validate_every},
                     {"checkpoint_every", c.checkpoint_every},
                     {"checkpoint_dir", c.checkpoint_dir.string()},
                     {"patience", c.patience ? nlohmann::json(*c.patience) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.lr = j.value("lr", c.lr);
  c.seed = j.value("seed", c.seed);
  c.validate_every = j.value("validate_every", c.validate_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir.string());
  if (j.contains("patience") && !j.at("patience").is_null()) c.patience = j.at("patience").get<std::size_t>();
}

void to_json(nlohmann::json& j, const TrainHistory& h) {
  j = nlohmann::json::object();
  auto& epochs = j["epochs"] = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"train_loss", e.train_loss},
                      {"val_nmse_db", e.val_nmse_db ? nlohmann::json(*e.val_nmse_db) : nlohmann::json(nullptr)},
                      {"seconds", e.seconds}});
  }
  j["step_losses"] = h.step_losses;
  j["checkpoints"] = h.checkpoints;
  j["rng_states"] = h.rng_states;
}

void from_json(const nlohmann::json& j, TrainHistory& h) {
  h = {};
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<std::size_t>();
    r.steps = e.at("steps").get<std::uint64_t>();
    r.train_loss = e.at("train_loss").get<double>();
    if (!e.at("val_nmse_db").is_null()) r.val_nmse_db = e.at("val_nmse_db").get<double>();
    r.seconds = e.at("seconds").get<double>();
    h.epochs.push_back(r);
  }
  h.step_losses = j.at("step_losses").get<std::vector<double>>();
  h.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  h.rng_states = j.at("rng_states").get<std::vector<std::pair<std::uint64_t, std::string>>>();
}

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

// Loss values must survive the JSON round trip exactly; nlohmann prints
// doubles with round-trip precision, so plain numbers suffice.

void append_floats(std::string& buf, const std::vector<float>& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  nlohmann::json header{{"model", c.model},
                        {"train", c.train},
                        {"epoch", c.epoch},
                        {"step", c.step},
                        {"epoch_order", c.epoch_order},
                        {"cursor", c.cursor},
                        {"epoch_loss_sum", c.epoch_loss_sum},
                        {"epoch_batches", c.epoch_batches},
                        {"rng_state", c.rng_state},
                        {"best_val_db", c.best_val_db ? nlohmann::json(*c.best_val_db) : nlohmann::json(nullptr)},
                        {"stale_validations", c.stale_validations},
                        {"history", c.history},
                        {"adam_steps", c.adam_steps}};
  auto& params = header["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < c.names.size(); ++i) params.push_back({{"name", c.names[i]}, {"shape", c.shapes[i]}});
  const std::string text = header.dump();

  std::string buf(kMagic, 4);
  const std::uint32_t version = kVersion;
  const std::uint64_t length = text.size();
  buf.append(reinterpret_cast<const char*>(&version), sizeof version);
  buf.append(reinterpret_cast<const char*>(&length), sizeof length);
  buf += text;
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    append_floats(buf, c.values[i]);
    append_floats(buf, c.adam_m[i]);
    append_floats(buf, c.adam_v[i]);
  }
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError(path.string() + ": not a checkpoint file");
  }
  if (bytes.size() < 16) throw TruncatedFileError(path.string() + ": truncated checkpoint header");
  std::uint32_t version;
  std::uint64_t length;
  std::memcpy(&version, bytes.data() + 4, sizeof version);
  std::memcpy(&length, bytes.data() + 8, sizeof length);
  if (version != kVersion) throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() - 16 < length) throw TruncatedFileError(path.string() + ": truncated checkpoint header");

  Checkpoint c;
  std::size_t offset = 16 + length;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, length));
    c.model = header.at("model").get<ModelConfig>();
    c.train = header.at("train").get<TrainConfig>();
    c.epoch = header.at("epoch").get<std::size_t>();
    c.step = header.at("step").get<std::uint64_t>();
    c.epoch_order = header.at("epoch_order").get<std::vector<std::size_t>>();
    c.cursor = header.at("cursor").get<std::size_t>();
    c.epoch_loss_sum = header.at("epoch_loss_sum").get<double>();
    c.epoch_batches = header.at("epoch_batches").get<std::size_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
    if (!header.at("best_val_db").is_null()) c.best_val_db = header.at("best_val_db").get<double>();
    c.stale_validations = header.at("stale_validations").get<std::size_t>();
    c.history = header.at("history").get<TrainHistory>();
    c.adam_steps = header.at("adam_steps").get<std::uint64_t>();
    for (const auto& p : header.at("parameters")) {
      c.names.push_back(p.at("name").get<std::string>());
      c.shapes.push_back(p.at("shape").get<Shape>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  auto take = [&](std::size_t count) {
    const std::size_t n = count * sizeof(float);
    if (bytes.size() - offset < n) throw TruncatedFileError(path.string() + ": truncated parameter data");
    std::vector<float> v(count);
    std::memcpy(v.data(), bytes.data() + offset, n);
    offset += n;
    return v;
  };
  for (const auto& shape : c.shapes) {
    const auto n = shape_numel(shape);
    c.values.push_back(take(n));
    c.adam_m.push_back(take(n));
    c.adam_v.push_back(take(n));
  }
  if (offset != bytes.size()) throw DataError(path.string() + ": trailing bytes after parameter data");
  return c;
}

void load_parameters(StnetModel<float>& model, const Checkpoint& ckpt) {
  const auto& params = model.parameters();
  if (params.size() != ckpt.names.size()) {
    throw DimensionMismatchError("checkpoint holds " + std::to_string(ckpt.names.size()) + " parameters, model has " +
                                 std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    if (p.name() != ckpt.names[i] || p.shape() != ckpt.shapes[i]) {
      throw DimensionMismatchError("checkpoint parameter '" + ckpt.names[i] + "' " + shape_str(ckpt.shapes[i]) +
                                   " does not match model parameter '" + p.name() + "' " + shape_str(p.shape()));
    }
    auto dst = p.mutable_values();
    std::copy(ckpt.values[i].begin(), ckpt.values[i].end(), dst.begin());
  }
}

}  // namespace stnet
