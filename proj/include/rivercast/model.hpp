#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rivercast/autodiff.hpp"
#include "rivercast/graph.hpp"
#include "rivercast/linalg.hpp"
#include "rivercast/timeutil.hpp"

namespace rivercast {

enum class Architecture {
  graph_gru,  // diffusion-convolutional GRU over stations + GRU over rainfall
  plain_gru,  // one GRU over the concatenated station stages and rainfall
  mlp,        // feed-forward net over the flattened window
};

enum class TargetKind { stage, discharge };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::graph_gru;
  TargetKind target = TargetKind::stage;
  std::size_t n_nodes = 1;
  std::size_t target_node = 0;
  int hidden = 16;
  int diffusion_steps = 2;
  int decoder_layers = 1;  // hidden ReLU layers before the linear output
  int window = 24;
  int horizon = 1;
};

/// Per-channel z-score statistics from the training split.
struct NormStats {
  std::vector<double> stage_mean, stage_std;  // one per node
  double rain_mean = 0.0, rain_std = 1.0;
  double target_mean = 0.0, target_std = 1.0;
};

/// Normalized model inputs over a contiguous hourly range.
struct SequenceData {
  Matrix stage;              // hours x nodes
  std::vector<double> rain;  // hours
};

/// T x N stage history (feet) and T rainfall totals (mm) ending at `origin`.
struct ForecastWindow {
  Matrix stage_series;
  std::vector<double> rainfall_series;
  Timestamp origin{};
  int horizon = 1;
};

/// Learnable tensors plus the configuration and statistics needed to use them.
struct BaseModel {
  ModelConfig config;
  NormStats norm;
  nn::ParameterMap params;

  /// Glorot-uniform weights and zero biases from `seed`.
  static BaseModel initialize(const ModelConfig& config, const NormStats& norm,
                              std::uint64_t seed);
};

void save_model(const BaseModel& model, const std::filesystem::path& path,
                const nlohmann::json& extra_meta = nlohmann::json::object());
BaseModel load_model(const std::filesystem::path& path, nlohmann::json* extra_meta = nullptr);

/// Weight matrix for a diffusion convolution with kernel Theta in
/// R^{D_out x D_in x K}: row k*D_in + d_in, column d_out holds
/// Theta[d_out][d_in][k].
Matrix diffusion_weights(std::span<const double> theta, int d_out, int d_in, int steps);

/// [P^0 X, P^1 X, ..., P^{K-1} X] for a batch of stacked N-row node blocks.
nn::Var diffusion_features(nn::Var x, const TransitionSet& transitions);

/// sum_k (P^k X) applied to a batch of node-feature blocks, followed by the
/// weight matrix and an optional bias row. Output is pre-activation.
nn::Var diffusion_conv(nn::Var x, nn::Var weights, const nn::Var* bias,
                       const TransitionSet& transitions);

/// Standalone convolution layer: ReLU(diffusion_conv(x)). `x` is N x D_in.
Matrix dconv(const Matrix& x, const Matrix& weights, const TransitionSet& transitions);

struct GruWeights {
  nn::Var wx_r, wh_r, b_r;
  nn::Var wx_u, wh_u, b_u;
  nn::Var wx_c, wh_c, b_c;
};

/// Standard GRU cell: H' = u*H + (1-u)*tanh(x Wx_c + (r*H) Wh_c + b_c).
nn::Var plain_gru_step(nn::Var x, nn::Var h, const GruWeights& w);

struct GraphGruWeights {
  nn::Var w_r, b_r, w_u, b_u, w_c, b_c;
};

/// Graph-convolutional GRU cell; gate maps are diffusion convolutions over
/// concat(X_t, H_prev). `x` and `h` stack a batch of N-row node blocks.
nn::Var gcgru_step(nn::Var x, nn::Var h, const GraphGruWeights& w,
                   const TransitionSet& transitions);

/// Forward pass for samples whose last observed hour is `origins[i]` in
/// `data`. Returns a B x 1 column of predictions in target units (feet or cfs).
/// With `track` false parameters enter the tape as constants.
nn::Var forward_batch(nn::Tape& tape, BaseModel& model, const TransitionSet& transitions,
                      const SequenceData& data, std::span<const std::size_t> origins,
                      bool track);

/// Normalizes a raw window and predicts the target h hours ahead.
/// Throws ContractError when the horizon is outside 1..6 or differs from the
/// model's configured horizon.
double forward(const ForecastWindow& window, BaseModel& model, const TransitionSet& transitions);

/// Predictions for many origins, batched.
std::vector<double> predict(BaseModel& model, const TransitionSet& transitions,
                            const SequenceData& data, std::span<const std::size_t> origins,
                            std::size_t batch_size = 256);

/// Histogram weights w = ln(1 + N / count(bin)) over equal-width bins of the
/// training targets. Out-of-range values fall into the edge bins; empty bins
/// count as one sample.
class BinWeights {
 public:
  static constexpr int kDefaultBins = 50;

  BinWeights() = default;
  static BinWeights fit(std::span<const double> targets, int bins = kDefaultBins);

  double weight(double target) const;
  std::vector<double> weights(std::span<const double> targets) const;

 private:
  double lo_ = 0.0, hi_ = 0.0;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Loss value only (no tape).
double weighted_mse_loss(std::span<const double> predictions, std::span<const double> targets,
                         const BinWeights& bins);

}  // namespace rivercast
