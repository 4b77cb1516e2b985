#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rivercast/model.hpp"

namespace rivercast {

struct GridPoint {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int hidden = 16;
  int decoder_layers = 1;
};

/// The default deterministic search space: batch {16, 64} x lr {1e-3, 3e-4}
/// x hidden {16, 32} x decoder layers {1, 2}.
std::vector<GridPoint> default_grid();

struct TrainOptions {
  std::vector<GridPoint> grid;
  int max_epochs = 100;
  int patience = 10;
  double clip_norm = 5.0;  // global gradient norm cap, 0 disables
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct GridRecord {
  GridPoint point;
  double best_val_loss = 0.0;
  bool diverged = false;
  int epochs_run = 0;
  std::vector<EpochLog> log;
  /// Validation loss each time a new best checkpoint was taken.
  std::vector<double> best_sequence;
};

/// Origins index hours of `data`; targets are in the model's target units.
struct TrainingData {
  const SequenceData* data = nullptr;
  std::vector<std::size_t> train_origins;
  std::vector<double> train_targets;
  std::vector<std::size_t> val_origins;
  std::vector<double> val_targets;
};

struct TrainResult {
  BaseModel model;
  std::size_t selected = 0;
  std::vector<GridRecord> records;
};

/// Grid search with Adam and early stopping on validation weighted MSE. Each
/// grid point is trained from a seed derived from `options.seed` and its
/// index, so results are reproducible. Grid points whose loss becomes
/// non-finite are recorded as diverged and skipped. Throws ContractError for
/// an empty grid, empty training set, or when every grid point diverged.
TrainResult train(const ModelConfig& config, const NormStats& norm,
                  const TransitionSet& transitions, const TrainingData& data,
                  const TrainOptions& options);

/// CSV with header `epoch,train_loss,val_loss,lr`.
void write_training_log(const GridRecord& record, const std::filesystem::path& path);

}  // namespace rivercast
