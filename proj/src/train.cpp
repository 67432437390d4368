// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "stnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "stnet/errors.hpp"
#include "stnet/parallel.hpp"

namespace stnet {

namespace fs = std::filesystem;

Tensor<float> make_batch(const data::Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<float> values;
  values.reserve(indices.size() * dataset.sample_size());
  for (auto i : indices) {
    auto s = dataset.sample(i);
    values.insert(values.end(), s.begin(), s.end());
  }
  return Tensor<float>({indices.size(), 2, dataset.n_c, dataset.n_t}, std::move(values));
}

namespace {

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void check_dims(const ModelConfig& model, const data::Dataset& dataset) {
  if (dataset.n_c != model.n_c || dataset.n_t != model.n_t) {
    throw DimensionMismatchError("dataset holds " + std::to_string(dataset.n_c) + "x" + std::to_string(dataset.n_t) +
                                 " channels, model expects " + std::to_string(model.n_c) + "x" +
                                 std::to_string(model.n_t));
  }
}

}  // namespace

Trainer::Trainer(const ModelConfig& model, const TrainConfig& config) : Trainer(model, config, true) {}

Trainer::Trainer(const ModelConfig& model, const TrainConfig& config, bool)
    : config_(config), model_(model), adam_(model_.parameters(), AdamConfig{config.lr}), rng_(config.seed) {
  config_.validate();
  state_.model = model;
  state_.train = config_;
}

Trainer Trainer::resume(const fs::path& checkpoint, std::optional<TrainConfig> extend) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  TrainConfig config = ckpt.train;
  if (extend) {
    config.epochs = extend->epochs;
    config.max_steps = extend->max_steps;
    config.checkpoint_dir = extend->checkpoint_dir;
  }
  Trainer t(ckpt.model, config, false);
  load_parameters(t.model_, ckpt);
  t.adam_.restore(ckpt.adam_steps, std::move(ckpt.adam_m), std::move(ckpt.adam_v));
  std::istringstream is(ckpt.rng_state);
  is >> t.rng_;
  if (!is) throw DataError(checkpoint.string() + ": corrupt RNG state");
  ckpt.values.clear();
  ckpt.train = config;
  t.state_ = std::move(ckpt);
  t.last_checkpoint_ = checkpoint.string();
  return t;
}

bool Trainer::budget_left() const {
  if (state_.epoch >= config_.epochs) return false;
  if (config_.max_steps > 0 && adam_.steps() >= config_.max_steps) return false;
  if (config_.patience && state_.stale_validations >= *config_.patience) return false;
  return true;
}

fs::path Trainer::checkpoint_path(const std::string& tag) const { return config_.checkpoint_dir / (tag + ".ckpt"); }

fs::path Trainer::save(const fs::path& path) const {
  Checkpoint c = state_;
  c.model = model_.config();
  c.train = config_;
  c.step = adam_.steps();
  c.rng_state = rng_text(rng_);
  c.adam_steps = adam_.steps();
  c.names.clear();
  c.shapes.clear();
  c.values.clear();
  for (const auto& p : model_.parameters()) {
    c.names.push_back(p.name());
    c.shapes.push_back(p.shape());
    c.values.emplace_back(p.values().begin(), p.values().end());
  }
  c.adam_m = adam_.first_moments();
  c.adam_v = adam_.second_moments();
  save_checkpoint(c, path);
  return path;
}

const TrainHistory& Trainer::run(const data::Dataset& train, const data::Dataset* validation) {
  check_dims(model_.config(), train);
  if (validation != nullptr) check_dims(model_.config(), *validation);
  const std::size_t n = train.size();
  if (n == 0) throw DataError("training set is empty");
  if (!state_.epoch_order.empty() && state_.epoch_order.size() != n) {
    throw DimensionMismatchError("checkpoint was taken on a training set of " +
                                 std::to_string(state_.epoch_order.size()) + " samples, got " + std::to_string(n));
  }
  if (!config_.checkpoint_dir.empty()) fs::create_directories(config_.checkpoint_dir);

  auto epoch_start = std::chrono::steady_clock::now();
  while (budget_left()) {
    if (state_.epoch_order.empty()) {
      state_.epoch_order.resize(n);
      std::iota(state_.epoch_order.begin(), state_.epoch_order.end(), std::size_t{0});
      std::shuffle(state_.epoch_order.begin(), state_.epoch_order.end(), rng_);
      state_.cursor = 0;
      state_.epoch_loss_sum = 0.0;
      state_.epoch_batches = 0;
      epoch_start = std::chrono::steady_clock::now();
    }
    const std::size_t end = std::min(n, state_.cursor + config_.batch_size);
    std::span<const std::size_t> indices(state_.epoch_order.data() + state_.cursor, end - state_.cursor);
    const auto batch = make_batch(train, indices);
    const auto loss = mse_loss(batch, model_.forward(batch));
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite loss at step " + std::to_string(adam_.steps() + 1), last_checkpoint_);
    }
    adam_.step(backward(loss));
    state_.history.step_losses.push_back(value);
    state_.epoch_loss_sum += value;
    ++state_.epoch_batches;
    state_.cursor = end;
    if (state_.cursor < n) continue;

    ++state_.epoch;
    EpochRecord record;
    record.epoch = state_.epoch;
    record.steps = adam_.steps();
    record.train_loss = state_.epoch_loss_sum / static_cast<double>(state_.epoch_batches);
    if (validation != nullptr && config_.validate_every > 0 && state_.epoch % config_.validate_every == 0) {
      const double db = evaluate(model_, *validation).nmse.db;
      record.val_nmse_db = db;
      if (!state_.best_val_db || db < *state_.best_val_db) {
        state_.best_val_db = db;
        state_.stale_validations = 0;
      } else {
        ++state_.stale_validations;
      }
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    state_.history.epochs.push_back(record);
    state_.epoch_order.clear();
    state_.cursor = 0;
    if (!config_.checkpoint_dir.empty() && config_.checkpoint_every > 0 &&
        state_.epoch % config_.checkpoint_every == 0 && budget_left()) {
      const auto path = checkpoint_path("epoch-" + std::to_string(state_.epoch));
      state_.history.checkpoints.push_back(path.string());
      state_.history.rng_states.emplace_back(adam_.steps(), rng_text(rng_));
      save(path);
      last_checkpoint_ = path.string();
    }
  }
  if (!config_.checkpoint_dir.empty()) {
    const auto path = checkpoint_path("final");
    state_.history.checkpoints.push_back(path.string());
    state_.history.rng_states.emplace_back(adam_.steps(), rng_text(rng_));
    save(path);
    last_checkpoint_ = path.string();
  }
  return state_.history;
}

std::vector<double> reconstruct(const StnetModel<float>& model, const data::Dataset& dataset, std::size_t batch_size) {
  check_dims(model.config(), dataset);
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  const std::size_t n = dataset.size(), size = dataset.sample_size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<double> out(n * size);
  parallel_for(batches, [&](std::size_t first, std::size_t last) {
    NoGradGuard guard;
    for (std::size_t b = first; b < last; ++b) {
      std::vector<std::size_t> indices;
      for (std::size_t i = b * batch_size; i < std::min(n, (b + 1) * batch_size); ++i) indices.push_back(i);
      const auto pred = model.forward(make_batch(dataset, indices));
      const auto values = pred.values();
      for (std::size_t k = 0; k < values.size(); ++k) {
        out[indices.front() * size + k] = dataset.meta.norm.denormalize(static_cast<double>(values[k]));
      }
    }
  });
  return out;
}

EvalReport evaluate(const StnetModel<float>& model, const data::Dataset& dataset, std::size_t batch_size) {
  const auto predicted = reconstruct(model, dataset, batch_size);
  const std::size_t size = dataset.sample_size();
  NmseAccumulator acc;
  std::vector<double> truth(size);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto s = dataset.sample(i);
    for (std::size_t k = 0; k < size; ++k) truth[k] = dataset.meta.norm.denormalize(static_cast<double>(s[k]));
    acc.add(truth, std::span<const double>(predicted).subspan(i * size, size));
  }
  EvalReport report;
  report.scenario = dataset.meta.scenario;
  report.gamma = model.config().gamma();
  report.split = dataset.meta.split;
  report.nmse = acc.result();
  return report;
}

csi::PrecodingScenario precoding_scenario(const StnetModel<float>& model, const data::Dataset& dataset,
                                          std::size_t users, std::uint64_t seed) {
  if (users == 0 || users > dataset.size()) {
    throw std::invalid_argument("need between 1 and " + std::to_string(dataset.size()) + " users, got " +
                                std::to_string(users));
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(users);
  const auto picked = dataset.subset(order);
  const auto estimates = reconstruct(model, picked);
  const std::size_t n_sub = dataset.meta.n_sub == 0 ? dataset.n_c : dataset.meta.n_sub;
  csi::PrecodingScenario scenario;
  for (std::size_t k = 0; k < users; ++k) {
    scenario.true_channels.push_back(csi::from_angular_delay(picked.channel(k), n_sub));
    csi::AngularDelayChannel est{picked.n_c, picked.n_t,
                                 std::vector<double>(estimates.begin() + k * picked.sample_size(),
                                                     estimates.begin() + (k + 1) * picked.sample_size())};
    scenario.estimated_channels.push_back(csi::from_angular_delay(est, n_sub));
  }
  return scenario;
}

}  // namespace stnet
