#include "rivercast/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/seeding.hpp"

namespace rivercast {
namespace {

double evaluate(BaseModel& model, const TransitionSet& transitions, const SequenceData& data,
                const std::vector<std::size_t>& origins, const std::vector<double>& targets,
                const BinWeights& bins) {
  const auto preds = predict(model, transitions, data, origins);
  return weighted_mse_loss(preds, targets, bins);
}

}  // namespace

std::vector<GridPoint> default_grid() {
  std::vector<GridPoint> grid;
  for (int batch : {16, 64}) {
    for (double lr : {1e-3, 3e-4}) {
      for (int hidden : {16, 32}) {
        for (int layers : {1, 2}) grid.push_back({batch, lr, hidden, layers});
      }
    }
  }
  return grid;
}

TrainResult train(const ModelConfig& config, const NormStats& norm,
                  const TransitionSet& transitions, const TrainingData& td,
                  const TrainOptions& options) {
  if (options.grid.empty()) throw ContractError("hyperparameter grid is empty");
  if (td.data == nullptr || td.train_origins.empty()) {
    throw ContractError("training set is empty");
  }
  if (td.train_origins.size() != td.train_targets.size() ||
      td.val_origins.size() != td.val_targets.size()) {
    throw ContractError("training origins and targets differ in length");
  }
  const SequenceData& data = *td.data;
  const BinWeights bins = BinWeights::fit(td.train_targets);
  const bool has_val = !td.val_origins.empty();
  const auto& sel_origins = has_val ? td.val_origins : td.train_origins;
  const auto& sel_targets = has_val ? td.val_targets : td.train_targets;

  TrainResult result;
  double overall_best = std::numeric_limits<double>::infinity();
  bool have_model = false;

  for (std::size_t g = 0; g < options.grid.size(); ++g) {
    const GridPoint& gp = options.grid[g];
    if (gp.batch_size < 1 || !(gp.learning_rate > 0.0)) {
      throw ContractError("grid point with non-positive batch size or learning rate");
    }
    ModelConfig cfg = config;
    cfg.hidden = gp.hidden;
    cfg.decoder_layers = gp.decoder_layers;
    const std::uint64_t seed = derive_seed(options.seed, "grid/" + std::to_string(g));
    BaseModel model = BaseModel::initialize(cfg, norm, derive_seed(seed, "init"));
    std::mt19937_64 shuffle_rng(derive_seed(seed, "shuffle"));
    nn::Adam adam(gp.learning_rate);

    GridRecord record;
    record.point = gp;
    BaseModel best = model;
    double best_val = evaluate(model, transitions, data, sel_origins, sel_targets, bins);
    record.best_sequence.push_back(best_val);
    int since_best = 0;

    std::vector<std::size_t> order(td.train_origins.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double loss_sum = 0.0;
      std::size_t loss_n = 0;
      const auto bs = static_cast<std::size_t>(gp.batch_size);
      for (std::size_t begin = 0; begin < order.size() && !record.diverged; begin += bs) {
        const std::size_t count = std::min(bs, order.size() - begin);
        std::vector<std::size_t> origins(count);
        std::vector<double> targets(count);
        for (std::size_t i = 0; i < count; ++i) {
          origins[i] = td.train_origins[order[begin + i]];
          targets[i] = td.train_targets[order[begin + i]];
        }
        const auto weights = bins.weights(targets);
        nn::Tape tape;
        nn::Var pred = forward_batch(tape, model, transitions, data, origins, true);
        nn::Var loss = nn::weighted_mse(pred, targets, weights);
        if (!std::isfinite(loss.scalar())) {
          record.diverged = true;
          break;
        }
        nn::zero_grads(model.params);
        tape.backward(loss);
        adam.step(model.params, options.clip_norm);
        loss_sum += loss.scalar() * static_cast<double>(count);
        loss_n += count;
      }
      if (record.diverged) break;
      const double val = evaluate(model, transitions, data, sel_origins, sel_targets, bins);
      if (!std::isfinite(val)) {
        record.diverged = true;
        break;
      }
      record.log.push_back({epoch, loss_sum / static_cast<double>(loss_n), val, gp.learning_rate});
      record.epochs_run = epoch;
      if (val < best_val) {
        best_val = val;
        best = model;
        record.best_sequence.push_back(val);
        since_best = 0;
      } else if (++since_best >= options.patience) {
        break;
      }
    }
    record.best_val_loss = best_val;
    if (!record.diverged && best_val < overall_best) {
      overall_best = best_val;
      result.model = std::move(best);
      result.selected = g;
      have_model = true;
    }
    result.records.push_back(std::move(record));
  }
  if (!have_model) throw ContractError("every grid point diverged");
  return result;
}

void write_training_log(const GridRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write training log " + path.string());
  out << "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& e : record.log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss,
                  e.learning_rate);
    out << buf;
  }
}

}  // namespace rivercast
