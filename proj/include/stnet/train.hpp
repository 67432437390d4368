// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop, evaluation and checkpoints.
//
// Checkpoint file (little-endian):
//   "STCK", u32 version, u64 header length, JSON header, then for every
//   parameter in header order: values, Adam first moment, Adam second moment,
//   each as f32[numel].

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stnet/dataset.hpp"
#include "stnet/layers.hpp"
#include "stnet/metrics.hpp"
#include "stnet/model.hpp"

namespace stnet {

struct TrainConfig {
  std::size_t batch_size = 200;
  std::size_t epochs = 1000;
  std::size_t max_steps = 0;  // 0: no step cap
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t validate_every = 1;    // epochs; 0 disables validation
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints
  std::optional<std::size_t> patience;   // validations without improvement before stopping

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::uint64_t steps = 0;  // cumulative Adam steps at the end of the epoch
  double train_loss = 0.0;  // mean batch loss over the epoch
  std::optional<double> val_nmse_db;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  std::vector<std::string> checkpoints;
  /// Shuffle RNG state (text form) saved with each checkpoint, keyed by step.
  std::vector<std::pair<std::uint64_t, std::string>> rng_states;
};

void to_json(nlohmann::json& j, const TrainHistory& h);
void from_json(const nlohmann::json& j, TrainHistory& h);

/// Everything needed to continue a run bit-for-bit.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;
  std::vector<std::size_t> epoch_order;  // permutation of the epoch in progress
  std::size_t cursor = 0;                 // samples of epoch_order already consumed
  double epoch_loss_sum = 0.0;
  std::size_t epoch_batches = 0;
  std::string rng_state;
  std::optional<double> best_val_db;
  std::size_t stale_validations = 0;
  TrainHistory history;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<float>> values;
  std::uint64_t adam_steps = 0;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws BadMagicError, TruncatedFileError or DataError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpointed parameter values into a model built from ckpt.model.
void load_parameters(StnetModel<float>& model, const Checkpoint& ckpt);

/// Batch tensor [n, 2, Nc, Nt] from dataset samples.
Tensor<float> make_batch(const data::Dataset& dataset, std::span<const std::size_t> indices);

class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& config);
  /// Continues a checkpointed run. `epochs`/`max_steps` may be raised through
  /// `extend`; everything else comes from the checkpoint.
  static Trainer resume(const std::filesystem::path& checkpoint, std::optional<TrainConfig> extend = std::nullopt);

  /// Runs until the epoch budget, step cap or patience is exhausted. Throws
  /// NumericalError on a non-finite loss.
  const TrainHistory& run(const data::Dataset& train, const data::Dataset* validation = nullptr);

  /// Writes the current state; returns the path.
  std::filesystem::path save(const std::filesystem::path& path) const;

  const StnetModel<float>& model() const { return model_; }
  const TrainHistory& history() const { return state_.history; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t steps() const { return adam_.steps(); }

 private:
  Trainer(const ModelConfig& model, const TrainConfig& config, bool fresh);
  bool budget_left() const;
  std::filesystem::path checkpoint_path(const std::string& tag) const;

  TrainConfig config_;
  StnetModel<float> model_;
  Adam<float> adam_;
  std::mt19937_64 rng_;
  Checkpoint state_;  // bookkeeping only; parameters live in model_ and adam_
  std::string last_checkpoint_;
};

struct EvalReport {
  std::string scenario;
  Ratio gamma;
  std::string split;
  NmseResult nmse;
};

/// NMSE of the model's reconstructions against the dataset, both
/// de-normalized with the dataset's normalization.
EvalReport evaluate(const StnetModel<float>& model, const data::Dataset& dataset, std::size_t batch_size = 64);

/// De-normalized reconstructions, sample-major.
std::vector<double> reconstruct(const StnetModel<float>& model, const data::Dataset& dataset,
                                std::size_t batch_size = 64);

/// K users drawn as distinct dataset samples. True channels come from the
/// samples, estimates from the model's reconstructions; both are taken back to
/// the frequency domain over the dataset's sub-carrier count (N_c when unknown).
csi::PrecodingScenario precoding_scenario(const StnetModel<float>& model, const data::Dataset& dataset,
                                          std::size_t users, std::uint64_t seed);

}  // namespace stnet
