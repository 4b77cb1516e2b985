#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rivercast/boosting.hpp"
#include "rivercast/lowess.hpp"
#include "rivercast/timeutil.hpp"

namespace rivercast {

/// Which series the forecast MAPE in a confidence index is measured against.
/// `reported` follows the method description (forecast error relative to the
/// rating-curve discharge); `measured` uses the field measurements instead.
enum class ConfidenceReference { reported, measured };

struct ResidualConfig {
  bool ar_enabled = true;
  bool stage1_enabled = true;
  bool stage2_enabled = true;
  bool stage3_enabled = true;
  double action_stage = 0.0;  // w_action, feet
  double lowess_fraction = 0.5;
  int lowess_iterations = 3;  // bisquare robustness passes
  int bootstrap_replicates = 20;
  BoostParams boost;
  double clamp_floor = 0.01;  // lower bound on (1 - c * r_hat)
  ConfidenceReference confidence_reference = ConfidenceReference::reported;
  std::uint64_t seed = 0;
};

/// Forecast-aligned series on an hourly target-time grid. Missing values are NaN.
struct ResidualSeries {
  std::vector<Timestamp> times;
  std::vector<double> forecast;        // base model discharge forecast x_S
  std::vector<double> reported;        // rating-curve discharge
  std::vector<double> measured;        // sparse field measurements
  std::vector<double> stage_forecast;  // x_W
  std::vector<double> stage_delta;     // x_W(t) - x_W(t-1)
  std::vector<char> fit_mask;          // rows usable for fitting (train/val portion)
  std::vector<char> curve_extrapolated;

  std::size_t size() const { return times.size(); }
  /// Throws ContractError unless all populated columns share one length.
  void validate() const;
};

/// Consecutive differences of a forecast stage series; zero where either
/// neighbour is missing.
std::vector<double> stage_deltas(std::span<const double> stage_forecast);

// ---------------------------------------------------------------------------
// Autoregressive correction in reported space.

struct ArState {
  double rho = 0.0;  // last refit
  double intercept = 0.0;
  std::size_t pairs = 0;
  std::size_t fallbacks = 0;  // refits that used the degenerate fallback
};

struct ArResult {
  std::vector<double> corrected;
  std::vector<double> rho;        // coefficient used for each target time
  std::vector<double> intercept;  // intercept used for each target time
  ArState state;
};

/// Online least squares of error(t) on error(t - h), refitted at every origin
/// with all pairs available at or before the origin. Throws ContractError on
/// length mismatch or h < 1.
ArResult ar_correct(std::span<const double> forecast, std::span<const double> reported, int horizon);

// ---------------------------------------------------------------------------
// Stage 1: hysteresis regression on the stage change.

struct Stage1State {
  bool enabled = false;
  double rho = 0.0;
  double intercept = 0.0;
  double action_stage = 0.0;
  double e_action = 0.0;  // percent of measured points at or above the action stage
  double delta_threshold = 0.0;
  double confidence = 0.0;  // c1
  std::size_t n_train = 0;
  std::string warning;

  bool passes_filter(double stage, double delta) const {
    return stage >= action_stage && delta >= delta_threshold;
  }
};

/// Inputs at measured times of the fitting portion.
struct MeasuredPoints {
  std::vector<double> corrected;  // forecast entering the stage
  std::vector<double> measured;
  std::vector<double> reported;
  std::vector<double> stage;
  std::vector<double> delta;
};

/// MAPE (percent) of `forecast` against `reference`.
double mape(std::span<const double> forecast, std::span<const double> reference);

/// MAPE_f / (MAPE_f + MAPE_reported); zero when both vanish.
double confidence_index(double forecast_mape, double reported_mape);

Stage1State stage1_fit(const MeasuredPoints& points, double action_stage,
                       ConfidenceReference reference = ConfidenceReference::reported);

struct StageOutput {
  std::vector<double> values;
  std::vector<char> clamped;
  std::vector<char> filter_pass;
};

/// (1 - c1 * r1_hat) * x, with r1_hat = rho * delta + b on filtered points
/// and 0 elsewhere. The factor is floored at `clamp_floor`.
StageOutput stage1_apply(std::span<const double> corrected, std::span<const double> stage,
                         std::span<const double> delta, const Stage1State& state,
                         double clamp_floor = 0.01);

// ---------------------------------------------------------------------------
// Stage 2: LOWESS of the remaining percentage error against stage.

struct Stage2State {
  bool enabled = false;
  LowessCurve curve;
  double fraction = 0.5;
  int iterations = 3;
  double confidence = 0.0;  // c2
};

/// Fits r2 (percentage error after Stage 1) against stage with a robust
/// LOWESS of `iterations` bisquare passes and computes c2
/// from the Stage 1 output at measured times. Disabled below 3 points.
Stage2State stage2_fit(std::span<const double> r2, std::span<const double> stage,
                       std::span<const double> stage1_at_measured,
                       std::span<const double> measured, std::span<const double> reported,
                       double fraction, int iterations = 3,
                       ConfidenceReference reference = ConfidenceReference::reported);

StageOutput stage2_apply(std::span<const double> stage1, std::span<const double> stage,
                         const Stage2State& state, double clamp_floor = 0.01);

// ---------------------------------------------------------------------------
// Stage 3: bootstrapped boosted trees on the absolute residual.

struct Stage3State {
  bool enabled = false;
  int replicates = 0;
  BaggedBoostedTrees model;
};

/// Learns r3 = measured - stage2 from (stage, delta). Disabled below 5 points.
Stage3State stage3_fit(std::span<const double> r3, std::span<const double> stage,
                       std::span<const double> delta, const BoostParams& params, int replicates,
                       std::uint64_t seed);

double stage3_predict(const Stage3State& state, double stage, double delta);

/// stage2 + predicted residual (identity when disabled).
std::vector<double> stage3_apply(std::span<const double> stage2, std::span<const double> stage,
                                 std::span<const double> delta, const Stage3State& state);

// ---------------------------------------------------------------------------

struct ResidualPipelineState {
  ArState ar;
  Stage1State stage1;
  Stage2State stage2;
  Stage3State stage3;
};

struct PipelineResult {
  std::vector<double> base, ar, stage1, stage2, stage3;
  std::vector<char> filter_pass;
  std::vector<char> clamped;
  ResidualPipelineState state;
};

/// AR correction followed by Stages 1-3, each fitted on measured points with
/// `fit_mask` set and applied to every row.
PipelineResult run_pipeline(const ResidualSeries& series, int horizon,
                            const ResidualConfig& config);

nlohmann::json to_json(const ResidualPipelineState& state);

/// Audit CSV: timestamp,base,ar_corrected,stage1,stage2,stage3,reported,measured,flags
void write_audit_csv(const ResidualSeries& series, const PipelineResult& result,
                     const std::filesystem::path& path);

}  // namespace rivercast
