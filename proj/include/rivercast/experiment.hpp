#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rivercast/boosting.hpp"
#include "rivercast/config.hpp"
#include "rivercast/graph.hpp"
#include "rivercast/ingest.hpp"
#include "rivercast/model.hpp"
#include "rivercast/rating_curve.hpp"
#include "rivercast/residual.hpp"
#include "rivercast/synth.hpp"
#include "rivercast/training.hpp"

namespace rivercast {

/// Frame, graph and curves with station order taken from the graph.
struct Dataset {
  HourlyFrame frame;
  WatershedGraph graph;
  std::vector<RatingCurveSet> curves;

  std::size_t target() const { return graph.target(); }
  const RatingCurveSet& target_curve() const;
};

/// Loads the configured inputs (or the `synth` outputs in `out_dir`).
Dataset load_dataset(const ExperimentConfig& config, const std::filesystem::path& out_dir);
Dataset dataset_from_synth(const SynthResult& synth);

/// Windows, splits and normalized inputs for one horizon.
struct HorizonData {
  int window = 24;
  int horizon = 1;
  SplitRanges ranges;
  std::vector<WindowRef> windows;
  std::vector<SplitName> split_of;
  NormStats stage_norm;      // target statistics of the stage
  NormStats discharge_norm;  // target statistics of the reported discharge
  SequenceData data;

  std::vector<std::size_t> rows(SplitName s) const;
};

HorizonData prepare_horizon(const Dataset& dataset, int window, int horizon,
                            std::span<const double> split_percentages);

/// Rating-curve discharge for a forecast stage. Stages at or below the curve
/// offset are raised just above it; `extrapolated` reports either case or a
/// stage outside the fitted range.
double stage_to_discharge(const RatingCurveSet& curve, double stage, Timestamp t,
                          bool* extrapolated = nullptr);

/// Inputs of each window flattened step by step as [stages..., rain].
Matrix flatten_windows(const SequenceData& data, std::span<const std::size_t> origins, int window);

/// Ordinary least squares with intercept (column-pivoted QR).
class LinearBaseline {
 public:
  void fit(const Matrix& x, std::span<const double> y);
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  std::vector<double> predict(const Matrix& x) const;
  nlohmann::json to_json() const;
  static LinearBaseline from_json(const nlohmann::json& j);

 private:
  Vector coef_;
  double intercept_ = 0.0;
};

/// The base model and the trained baselines for one horizon.
struct ModelSet {
  int horizon = 1;
  BaseModel base;
  std::map<std::string, BaseModel> neural;  // mlp, plain_gru, dcrnn_direct
  std::optional<LinearBaseline> linear;
  std::optional<BoostedTrees> gbt;
  std::vector<std::string> baselines;  // configured names, persistence included
  std::map<std::string, TrainResult> training;  // empty after loading
};

TrainOptions train_options(const ExperimentConfig& config, const std::string& model_name,
                           int horizon);

/// Trains the base model and every configured learned baseline.
/// `only` restricts training to the named models (for tests).
ModelSet train_models(const Dataset& dataset, const HorizonData& data,
                      const ExperimentConfig& config,
                      const std::vector<std::string>& only = {});

/// Checkpoints: base_h{h}.json and {name}_h{h}.json; training logs as CSV.
std::vector<std::filesystem::path> save_models(const ModelSet& models,
                                               const std::filesystem::path& dir);
ModelSet load_models(const std::filesystem::path& dir, int horizon,
                     const std::vector<std::string>& baselines);

/// Hourly rows over the target times of one horizon's windows.
struct ForecastTable {
  int horizon = 1;
  std::vector<Timestamp> time;
  std::vector<SplitName> split;
  std::vector<double> stage_obs, reported, measured, base_stage;
  std::vector<char> extrapolated;
  std::vector<std::string> names;  // discharge forecasts: base then baselines
  std::vector<std::vector<double>> values;
  // Residual cascade on the base forecast.
  std::vector<double> ar, stage1, stage2, stage3;
  std::vector<char> filter_pass, clamped;

  std::size_t size() const { return time.size(); }
  const std::vector<double>& column(const std::string& name) const;
};

ForecastTable make_forecasts(const Dataset& dataset, const HorizonData& data, ModelSet& models,
                             const TransitionSet& transitions);

/// Residual inputs for the base forecast: train and validation rows form the
/// fitting portion.
ResidualSeries residual_series(const ForecastTable& table);

/// Runs the residual cascade with the train and validation rows as the
/// fitting portion and stores the outputs in the table.
PipelineResult apply_residual(ForecastTable& table, const ResidualConfig& config);

void write_forecast_csv(const ForecastTable& table, const std::filesystem::path& path);
ForecastTable read_forecast_csv(const std::filesystem::path& path, int horizon);

/// Per-split metrics: every model against reported discharge (with peak
/// statistics over flood events of the observed stage), the base forecast,
/// the reported series and each residual stage against field measurements,
/// and the same restricted to Stage-1 filtered points.
nlohmann::json evaluate_table(const ForecastTable& table, double action_stage);

}  // namespace rivercast
