#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace rivercast {

/// Pointwise forecast skill. `mape` is in percent and skips zero targets;
/// `nse` and `cc` are absent when undefined (n < 2 or zero variance).
struct ScalarMetrics {
  double mae = 0.0;
  std::optional<double> mape;
  double rmse = 0.0;
  double bias = 0.0;
  std::optional<double> nse;
  std::optional<double> cc;
  std::size_t n_points = 0;
  std::size_t mape_excluded = 0;
};

/// Inclusive index range of an hourly series.
struct FloodEvent {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - start + 1; }
};

struct PeakMetrics {
  double peak_bias = 0.0;
  double peak_pct_bias = 0.0;   // percent of the mean observed value in the event
  double peak_time_bias = 0.0;  // hours, forecast peak minus observed peak
};

struct MetricsReport {
  ScalarMetrics scalar;
  std::vector<FloodEvent> events;
  std::vector<PeakMetrics> per_event;
  std::optional<PeakMetrics> peak_aggregate;  // mean over events
};

inline constexpr std::size_t kFloodMergeGapHours = 6;

/// Throws ContractError on length mismatch or empty input.
ScalarMetrics compute_scalar_metrics(std::span<const double> observed,
                                     std::span<const double> forecast);

/// Maximal runs with stage > action_level; runs separated by fewer than
/// `merge_gap` hours below the threshold are merged.
std::vector<FloodEvent> extract_flood_events(std::span<const double> stage, double action_level,
                                             std::size_t merge_gap = kFloodMergeGapHours);

/// Peak statistics inside one event. Ties in argmax resolve to the earliest hour.
PeakMetrics peak_metrics(std::span<const double> observed, std::span<const double> forecast,
                         const FloodEvent& event);

MetricsReport evaluate_series(std::span<const double> observed, std::span<const double> forecast,
                              std::span<const FloodEvent> events);

nlohmann::json to_json(const ScalarMetrics& m);
nlohmann::json to_json(const MetricsReport& report);

}  // namespace rivercast
