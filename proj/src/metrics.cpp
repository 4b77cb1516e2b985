#include "rivercast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "rivercast/errors.hpp"

namespace rivercast {

ScalarMetrics compute_scalar_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) {
    throw ContractError("metrics: " + std::to_string(y.size()) + " observations vs " +
                        std::to_string(yhat.size()) + " forecasts");
  }
  if (y.empty()) throw ContractError("metrics: empty series");
  const std::size_t n = y.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  ScalarMetrics m;
  m.n_points = n;
  double abs_sum = 0.0, sq_sum = 0.0, err_sum = 0.0, pct_sum = 0.0;
  double y_mean = 0.0, f_mean = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = yhat[i] - y[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    err_sum += e;
    if (y[i] != 0.0) {
      pct_sum += std::abs(e / y[i]);
      ++pct_n;
    }
    y_mean += y[i];
    f_mean += yhat[i];
  }
  y_mean *= inv_n;
  f_mean *= inv_n;
  m.mae = abs_sum * inv_n;
  m.rmse = std::sqrt(sq_sum * inv_n);
  m.bias = err_sum * inv_n;
  m.mape_excluded = n - pct_n;
  if (pct_n > 0) m.mape = 100.0 * pct_sum / static_cast<double>(pct_n);

  if (n >= 2) {
    double syy = 0.0, sff = 0.0, sfy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dy = y[i] - y_mean;
      const double df = yhat[i] - f_mean;
      syy += dy * dy;
      sff += df * df;
      sfy += df * dy;
    }
    if (syy > 0.0) m.nse = 1.0 - sq_sum / syy;
    if (syy > 0.0 && sff > 0.0) m.cc = std::clamp(sfy / std::sqrt(sff * syy), -1.0, 1.0);
  }
  return m;
}

std::vector<FloodEvent> extract_flood_events(std::span<const double> stage, double action_level,
                                             std::size_t merge_gap) {
  std::vector<FloodEvent> runs;
  std::size_t i = 0;
  while (i < stage.size()) {
    if (stage[i] > action_level) {
      std::size_t j = i;
      while (j + 1 < stage.size() && stage[j + 1] > action_level) ++j;
      runs.push_back({i, j});
      i = j + 1;
    } else {
      ++i;
    }
  }
  std::vector<FloodEvent> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && r.start - merged.back().end - 1 < merge_gap) {
      merged.back().end = r.end;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

PeakMetrics peak_metrics(std::span<const double> y, std::span<const double> yhat,
                         const FloodEvent& event) {
  if (y.size() != yhat.size() || event.end >= y.size() || event.start > event.end) {
    throw ContractError("peak_metrics: event outside the series");
  }
  double err_sum = 0.0;
  double obs_sum = 0.0;
  std::size_t obs_peak = event.start;
  std::size_t fc_peak = event.start;
  for (std::size_t i = event.start; i <= event.end; ++i) {
    err_sum += yhat[i] - y[i];
    obs_sum += y[i];
    if (y[i] > y[obs_peak]) obs_peak = i;
    if (yhat[i] > yhat[fc_peak]) fc_peak = i;
  }
  const double n = static_cast<double>(event.length());
  PeakMetrics p;
  p.peak_bias = err_sum / n;
  p.peak_pct_bias = obs_sum != 0.0 ? 100.0 * err_sum / obs_sum : 0.0;
  p.peak_time_bias = static_cast<double>(fc_peak) - static_cast<double>(obs_peak);
  return p;
}

MetricsReport evaluate_series(std::span<const double> y, std::span<const double> yhat,
                              std::span<const FloodEvent> events) {
  MetricsReport report;
  report.scalar = compute_scalar_metrics(y, yhat);
  report.events.assign(events.begin(), events.end());
  if (!events.empty()) {
    PeakMetrics agg;
    for (const auto& ev : events) {
      report.per_event.push_back(peak_metrics(y, yhat, ev));
      agg.peak_bias += report.per_event.back().peak_bias;
      agg.peak_pct_bias += report.per_event.back().peak_pct_bias;
      agg.peak_time_bias += report.per_event.back().peak_time_bias;
    }
    const double k = static_cast<double>(events.size());
    agg.peak_bias /= k;
    agg.peak_pct_bias /= k;
    agg.peak_time_bias /= k;
    report.peak_aggregate = agg;
  }
  return report;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json to_json(const PeakMetrics& p) {
  return {{"peak_bias", p.peak_bias},
          {"peak_pct_bias", p.peak_pct_bias},
          {"peak_time_bias_h", p.peak_time_bias}};
}

}  // namespace

nlohmann::json to_json(const ScalarMetrics& m) {
  return {{"mae", m.mae},   {"mape", opt(m.mape)}, {"rmse", m.rmse},
          {"bias", m.bias}, {"nse", opt(m.nse)},   {"cc", opt(m.cc)},
          {"n_points", m.n_points}, {"mape_excluded", m.mape_excluded}};
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json out = to_json(report.scalar);
  out["n_flood_events"] = report.events.size();
  out["peak"] = report.peak_aggregate ? to_json(*report.peak_aggregate) : nlohmann::json(nullptr);
  out["events"] = nlohmann::json::array();
  for (std::size_t i = 0; i < report.per_event.size(); ++i) {
    nlohmann::json ev = to_json(report.per_event[i]);
    ev["start"] = report.events[i].start;
    ev["end"] = report.events[i].end;
    out["events"].push_back(std::move(ev));
  }
  return out;
}

}  // namespace rivercast
