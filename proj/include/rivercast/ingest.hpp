#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rivercast/model.hpp"
#include "rivercast/timeutil.hpp"

namespace rivercast {

enum class Variable { stage_ft, rainfall_mm, discharge_reported_cfs, discharge_measured_cfs };

std::string to_string(Variable v);

/// One row of the time-series CSV: `timestamp,station_id,variable,value`.
struct Observation {
  Timestamp time;
  std::string station;
  Variable variable = Variable::stage_ft;
  double value = 0.0;
};

struct Measurement {
  Timestamp time;
  double value = 0.0;
};

/// Hourly multi-station series on a shared grid. Dense columns use NaN for
/// missing hours; field measurements keep their own timestamps.
struct HourlyFrame {
  Timestamp start{};
  std::vector<std::string> stations;
  std::string rainfall_id = "watershed";
  std::vector<std::vector<double>> stage;     // [station][hour], feet
  std::vector<double> rainfall;               // [hour], mm
  std::vector<std::vector<double>> reported;  // [station][hour], cfs
  std::vector<std::vector<Measurement>> measured;  // [station], sorted by time

  std::size_t hours() const { return rainfall.size(); }
  Timestamp time(std::size_t hour) const { return start + Hours(static_cast<long>(hour)); }
  std::size_t station_index(const std::string& id) const;

  /// Field measurement within +-30 min of `t` (nearest, earlier on ties).
  std::optional<double> measurement_near(std::size_t station, Timestamp t) const;

  /// True when any station stage or the rainfall is missing at `hour`.
  bool dense_missing(std::size_t hour) const;

  bool operator==(const HourlyFrame& other) const;
};

/// Reads and validates the CSV (exact header required). Throws ParseError
/// with the 1-based line number of the offending row.
std::vector<Observation> read_observations(const std::filesystem::path& path);

/// Resamples observations to the hourly grid: a sample exactly on the hour
/// wins, otherwise the nearest within +-30 min (earlier on ties), otherwise
/// missing. Rainfall in (H-1h, H] is summed into hour H; several rainfall
/// series are averaged. Throws ConfigError for ids outside `stations` and
/// `rainfall_id`.
HourlyFrame resample_hourly(std::span<const Observation> observations,
                            const std::vector<std::string>& stations,
                            const std::string& rainfall_id = "watershed");

HourlyFrame load_and_resample(std::span<const std::filesystem::path> paths,
                              const std::vector<std::string>& stations,
                              const std::string& rainfall_id = "watershed");

/// Writes every present value with round-trip precision, ordered by time.
void write_frame_csv(const HourlyFrame& frame, const std::filesystem::path& path);

struct HourRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t h) const { return h >= begin && h < end; }
};

struct SplitRanges {
  HourRange train, val, test;
};

/// Chronological split by percentages summing to 100. Throws
/// InsufficientDataError when the frame is shorter than 3 * window and
/// ContractError for bad fractions.
SplitRanges split(const HourlyFrame& frame, std::span<const double> percentages, int window);

/// A training/evaluation example ending at hour `origin`, target at origin + h.
struct WindowRef {
  std::size_t origin = 0;
  std::size_t target_hour = 0;
  double target_stage = 0.0;
  double target_reported = 0.0;
  std::optional<double> target_measured;
};

/// Stride-1 windows for `target_station`; windows whose inputs or targets
/// touch a missing dense value are dropped.
std::vector<WindowRef> make_windows(const HourlyFrame& frame, std::size_t target_station,
                                    int window, int horizon);

/// Raw (un-normalized) model input for one window.
ForecastWindow extract_window(const HourlyFrame& frame, const WindowRef& ref, int window,
                              int horizon);

enum class SplitName { train, val, test };

std::string to_string(SplitName s);

/// Split containing the window's target hour.
SplitName assign_split(const SplitRanges& ranges, const WindowRef& ref);

/// Per-channel mean/std over training hours; target statistics from
/// `train_targets`. Throws ContractError for constant channels.
NormStats fit_norm_stats(const HourlyFrame& frame, const HourRange& train,
                         std::span<const double> train_targets);

/// Z-scored stage and rainfall (NaN stays NaN).
SequenceData normalize(const HourlyFrame& frame, const NormStats& stats);

}  // namespace rivercast
