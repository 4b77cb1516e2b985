#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rivercast/graph.hpp"
#include "rivercast/ingest.hpp"
#include "rivercast/metrics.hpp"
#include "rivercast/rating_curve.hpp"
#include "rivercast/timeutil.hpp"

namespace rivercast {

struct SynthStation {
  std::string id;
  int downstream = -1;  // index of the receiving station, -1 for the outlet
  double reach_km = 0.0;
  double area_km2 = 100.0;
  double catchment_k_h = 8.0;  // linear-reservoir constant of the local catchment
  double reach_k_h = 4.0;      // linear-reservoir constant of the reach to `downstream`
  double baseflow_cfs = 50.0;
  // Static rating curve: Q = a (h - offset)^b below `break_ft`, continuous
  // second piece with exponent `upper_exponent` above.
  double curve_offset_ft = 1.0;
  double curve_coefficient = 30.0;
  double curve_exponent = 2.0;
  double curve_break_ft = 6.0;
  double upper_exponent = 1.6;
  double curve_top_ft = 25.0;
};

struct SynthScenario {
  std::vector<SynthStation> stations;  // must contain exactly one outlet: the target
  std::size_t target = 0;
  double storm_rate_per_day = 0.15;
  double storm_duration_mean_h = 8.0;
  double storm_depth_mean_mm = 15.0;
  double spatial_sigma = 0.4;  // log-normal spread of per-station storm depth
  double runoff_coefficient = 0.3;
  double slow_fraction = 0.2;  // share of runoff through the groundwater reservoir
  double slow_k_h = 240.0;
  double kappa = 0.0;          // hysteresis gain, per foot of hourly stage change
  double sigma_meas = 0.0;     // relative measurement noise
  int measurement_interval_h = 6;
  int measurement_jitter_h = 2;
  double action_level_ft = 8.0;
  /// Offset change of every curve at mid-series; 0 keeps one segment.
  double curve_shift_ft = 0.0;
  int n_days = 730;
  Timestamp start = parse_iso8601("2020-01-01T00:00:00Z");
  std::uint64_t seed = 0;

  /// Three stations: two tributary gauges draining into the target.
  static SynthScenario default_scenario();

  /// Throws ContractError for out-of-range parameters.
  void validate() const;
};

SynthScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthScenario& s);

/// Per-station hourly ground truth.
struct GroundTruth {
  std::vector<std::vector<double>> steady_cfs;  // rating-curve (reported) flow
  std::vector<std::vector<double>> true_cfs;
  std::vector<std::vector<double>> runoff_input_cfs;  // local runoff entering each catchment
};

struct SynthResult {
  SynthScenario scenario;
  HourlyFrame frame;
  WatershedGraph graph;
  std::vector<RatingCurveSet> curves;
  GroundTruth truth;
  std::vector<FloodEvent> events;  // at the target station
  double depth_scale = 1.0;        // storm depth multiplier after flood-rate widening
  std::vector<std::string> log;
};

/// Rainfall -> linear-reservoir runoff -> routed flows -> stage from the
/// inverse static curve; reported = Q_rc(h), true = Q_rc(h)(1 + kappa dh),
/// measured = true (1 + N(0, sigma_meas)) on the jittered schedule.
/// Deterministic per seed; kappa and sigma_meas do not affect stage or
/// reported flow.
SynthResult generate(const SynthScenario& scenario);

/// data.csv, graph.json, rating_curves.json, ground_truth.csv, events.csv,
/// scenario.json. Returns the written paths.
std::vector<std::filesystem::path> write_synth_outputs(const SynthResult& result,
                                                       const std::filesystem::path& dir);

}  // namespace rivercast
