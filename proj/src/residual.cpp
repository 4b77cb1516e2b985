#include "rivercast/residual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rivercast/errors.hpp"
#include "rivercast/seeding.hpp"

namespace rivercast {
namespace {

bool finite(double v) { return std::isfinite(v); }

/// Linear-interpolation percentile (0..100) of unsorted values.
double percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v.front();
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Ordinary least squares y = slope * x + intercept. Falls back to slope 0
/// and the mean of y when x has (numerically) no spread.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 1e-14 * n * std::max(1.0, mx * mx)) return {0.0, my, true};
  const double slope = sxy / sxx;
  return {slope, my - slope * mx, false};
}

double bounded_factor(double c, double r_hat, double floor, char& clamped) {
  const double f = 1.0 - c * r_hat;
  if (f < floor) {
    clamped = 1;
    return floor;
  }
  return f;
}

void require_lengths(std::size_t n, std::initializer_list<std::size_t> others, const char* op) {
  for (std::size_t m : others) {
    if (m != n) throw ContractError(std::string(op) + ": series lengths differ");
  }
}

}  // namespace

void ResidualSeries::validate() const {
  const std::size_t n = times.size();
  require_lengths(n, {forecast.size(), reported.size(), measured.size(), stage_forecast.size(),
                      stage_delta.size(), fit_mask.size()},
                  "residual series");
  if (!curve_extrapolated.empty() && curve_extrapolated.size() != n) {
    throw ContractError("residual series: extrapolation flags length differs");
  }
}

std::vector<double> stage_deltas(std::span<const double> stage) {
  std::vector<double> out(stage.size(), 0.0);
  for (std::size_t i = 1; i < stage.size(); ++i) {
    if (finite(stage[i]) && finite(stage[i - 1])) out[i] = stage[i] - stage[i - 1];
  }
  return out;
}

ArResult ar_correct(std::span<const double> forecast, std::span<const double> reported,
                    int horizon) {
  if (forecast.size() != reported.size()) {
    throw ContractError("ar_correct: forecast and reported series differ in length");
  }
  if (horizon < 1) throw ContractError("ar_correct: horizon must be positive");
  const std::size_t n = forecast.size();
  const auto h = static_cast<std::size_t>(horizon);

  std::vector<double> err(n, std::nan(""));
  for (std::size_t i = 0; i < n; ++i) {
    if (finite(forecast[i]) && finite(reported[i])) err[i] = reported[i] - forecast[i];
  }

  ArResult out;
  out.corrected.assign(n, std::nan(""));
  out.rho.assign(n, 0.0);
  out.intercept.assign(n, 0.0);

  // Running moments: pairs (x = err[s-h], y = err[s]) for s <= origin, and
  // the mean of all errors at or before the origin.
  double cnt = 0.0, mx = 0.0, my = 0.0, m2x = 0.0, cxy = 0.0;
  double err_n = 0.0, err_mean = 0.0;
  std::size_t next_origin = 0;
  double rho = 0.0, b = 0.0;

  auto absorb = [&](std::size_t s) {
    if (finite(err[s])) {
      err_n += 1.0;
      err_mean += (err[s] - err_mean) / err_n;
    }
    if (s >= h && finite(err[s]) && finite(err[s - h])) {
      const double x = err[s - h];
      const double y = err[s];
      cnt += 1.0;
      const double dx = x - mx;
      mx += dx / cnt;
      my += (y - my) / cnt;
      m2x += dx * (x - mx);
      cxy += dx * (y - my);
    }
  };
  auto refit = [&] {
    const bool degenerate = cnt < 2.0 || m2x <= 1e-14 * cnt * std::max(1.0, mx * mx);
    if (degenerate) {
      rho = 0.0;
      b = err_n > 0.0 ? err_mean : 0.0;
      ++out.state.fallbacks;
    } else {
      rho = cxy / m2x;
      b = my - rho * mx;
    }
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (!finite(forecast[i])) continue;
    if (i < h) {
      out.corrected[i] = forecast[i];
      continue;
    }
    const std::size_t origin = i - h;
    while (next_origin <= origin) absorb(next_origin++);
    refit();
    const double lag_err = finite(err[origin]) ? err[origin] : 0.0;
    out.rho[i] = rho;
    out.intercept[i] = b;
    out.corrected[i] = forecast[i] + rho * lag_err + b;
  }
  out.state.rho = rho;
  out.state.intercept = b;
  out.state.pairs = static_cast<std::size_t>(cnt);
  return out;
}

double mape(std::span<const double> forecast, std::span<const double> reference) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < forecast.size(); ++i) {
    if (reference[i] == 0.0) continue;
    acc += std::abs((reference[i] - forecast[i]) / reference[i]);
    ++n;
  }
  return n > 0 ? 100.0 * acc / static_cast<double>(n) : 0.0;
}

double confidence_index(double forecast_mape, double reported_mape) {
  const double den = forecast_mape + reported_mape;
  return den > 0.0 ? std::clamp(forecast_mape / den, 0.0, 1.0) : 0.0;
}

Stage1State stage1_fit(const MeasuredPoints& p, double action_stage,
                       ConfidenceReference reference) {
  const std::size_t n = p.measured.size();
  require_lengths(n, {p.corrected.size(), p.reported.size(), p.stage.size(), p.delta.size()},
                  "stage1_fit");
  Stage1State s;
  s.action_stage = action_stage;
  if (n == 0) {
    s.warning = "no measured points";
    return s;
  }
  std::size_t above = 0;
  for (double st : p.stage) above += st >= action_stage ? 1 : 0;
  s.e_action = 100.0 * static_cast<double>(above) / static_cast<double>(n);
  s.delta_threshold = percentile(p.delta, 100.0 - s.e_action);

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.passes_filter(p.stage[i], p.delta[i])) continue;
    xs.push_back(p.delta[i]);
    ys.push_back((p.corrected[i] - p.measured[i]) / p.corrected[i]);
  }
  s.n_train = xs.size();
  if (xs.size() < 2) {
    s.warning = "fewer than 2 filtered points; stage disabled";
    return s;
  }
  const LineFit line = fit_line(xs, ys);
  s.rho = line.slope;
  s.intercept = line.intercept;
  if (line.degenerate) s.warning = "no spread in stage change; slope fixed at 0";
  const auto& ref = reference == ConfidenceReference::reported ? p.reported : p.measured;
  s.confidence = confidence_index(mape(p.corrected, ref), mape(p.reported, p.measured));
  s.enabled = true;
  return s;
}

StageOutput stage1_apply(std::span<const double> corrected, std::span<const double> stage,
                         std::span<const double> delta, const Stage1State& state,
                         double clamp_floor) {
  require_lengths(corrected.size(), {stage.size(), delta.size()}, "stage1_apply");
  StageOutput out;
  out.values.assign(corrected.begin(), corrected.end());
  out.clamped.assign(corrected.size(), 0);
  out.filter_pass.assign(corrected.size(), 0);
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    if (!state.passes_filter(stage[i], delta[i])) continue;
    out.filter_pass[i] = 1;
    if (!state.enabled || !finite(corrected[i])) continue;
    const double r_hat = state.rho * delta[i] + state.intercept;
    out.values[i] = bounded_factor(state.confidence, r_hat, clamp_floor, out.clamped[i]) * corrected[i];
  }
  return out;
}

Stage2State stage2_fit(std::span<const double> r2, std::span<const double> stage,
                       std::span<const double> stage1_at_measured,
                       std::span<const double> measured, std::span<const double> reported,
                       double fraction, int iterations, ConfidenceReference reference) {
  require_lengths(r2.size(), {stage.size(), stage1_at_measured.size(), measured.size(), reported.size()},
                  "stage2_fit");
  Stage2State s;
  s.fraction = fraction;
  s.iterations = iterations;
  if (r2.size() < 3) return s;
  s.curve = LowessCurve::fit(stage, r2, fraction, iterations);
  const auto& ref = reference == ConfidenceReference::reported ? reported : measured;
  s.confidence = confidence_index(mape(stage1_at_measured, ref), mape(reported, measured));
  s.enabled = true;
  return s;
}

StageOutput stage2_apply(std::span<const double> stage1, std::span<const double> stage,
                         const Stage2State& state, double clamp_floor) {
  require_lengths(stage1.size(), {stage.size()}, "stage2_apply");
  StageOutput out;
  out.values.assign(stage1.begin(), stage1.end());
  out.clamped.assign(stage1.size(), 0);
  out.filter_pass.assign(stage1.size(), 0);
  if (!state.enabled) return out;
  for (std::size_t i = 0; i < stage1.size(); ++i) {
    if (!finite(stage1[i]) || !finite(stage[i])) continue;
    out.values[i] = bounded_factor(state.confidence, state.curve(stage[i]), clamp_floor,
                                   out.clamped[i]) *
                    stage1[i];
  }
  return out;
}

Stage3State stage3_fit(std::span<const double> r3, std::span<const double> stage,
                       std::span<const double> delta, const BoostParams& params, int replicates,
                       std::uint64_t seed) {
  require_lengths(r3.size(), {stage.size(), delta.size()}, "stage3_fit");
  Stage3State s;
  s.replicates = replicates;
  if (r3.size() < 5) return s;
  Matrix x(static_cast<Eigen::Index>(r3.size()), 2);
  for (std::size_t i = 0; i < r3.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = stage[i];
    x(static_cast<Eigen::Index>(i), 1) = delta[i];
  }
  s.model.fit(x, r3, params, replicates, seed);
  s.enabled = true;
  return s;
}

double stage3_predict(const Stage3State& state, double stage, double delta) {
  if (!state.enabled) return 0.0;
  const double row[] = {stage, delta};
  return state.model.predict(row);
}

std::vector<double> stage3_apply(std::span<const double> stage2, std::span<const double> stage,
                                 std::span<const double> delta, const Stage3State& state) {
  require_lengths(stage2.size(), {stage.size(), delta.size()}, "stage3_apply");
  std::vector<double> out(stage2.begin(), stage2.end());
  if (!state.enabled) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!finite(out[i]) || !finite(stage[i])) continue;
    out[i] += stage3_predict(state, stage[i], delta[i]);
  }
  return out;
}

PipelineResult run_pipeline(const ResidualSeries& series, int horizon,
                            const ResidualConfig& config) {
  series.validate();
  const std::size_t n = series.size();
  PipelineResult r;
  r.base = series.forecast;

  if (config.ar_enabled) {
    ArResult ar = ar_correct(series.forecast, series.reported, horizon);
    r.ar = std::move(ar.corrected);
    r.state.ar = ar.state;
  } else {
    r.ar = series.forecast;
  }

  std::vector<std::size_t> fit_rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (series.fit_mask[i] && finite(series.measured[i]) && finite(r.ar[i]) &&
        finite(series.reported[i]) && finite(series.stage_forecast[i]) && series.measured[i] != 0.0) {
      fit_rows.push_back(i);
    }
  }
  auto gather = [&](const std::vector<double>& v) {
    std::vector<double> out;
    out.reserve(fit_rows.size());
    for (std::size_t i : fit_rows) out.push_back(v[i]);
    return out;
  };
  const auto m_meas = gather(series.measured);
  const auto m_rep = gather(series.reported);
  const auto m_stage = gather(series.stage_forecast);
  const auto m_delta = gather(series.stage_delta);

  r.state.stage1.action_stage = config.action_stage;
  if (config.stage1_enabled && !fit_rows.empty()) {
    MeasuredPoints pts{gather(r.ar), m_meas, m_rep, m_stage, m_delta};
    r.state.stage1 = stage1_fit(pts, config.action_stage, config.confidence_reference);
  }
  StageOutput s1 = stage1_apply(r.ar, series.stage_forecast, series.stage_delta, r.state.stage1,
                                config.clamp_floor);
  r.stage1 = std::move(s1.values);
  r.filter_pass = std::move(s1.filter_pass);
  r.clamped = std::move(s1.clamped);

  r.state.stage2.fraction = config.lowess_fraction;
  r.state.stage2.iterations = config.lowess_iterations;
  if (config.stage2_enabled && !fit_rows.empty()) {
    const auto m_upd = gather(r.ar);
    const auto m_s1 = gather(r.stage1);
    std::vector<double> r2(fit_rows.size());
    for (std::size_t k = 0; k < fit_rows.size(); ++k) r2[k] = (m_s1[k] - m_meas[k]) / m_upd[k];
    r.state.stage2 = stage2_fit(r2, m_stage, m_s1, m_meas, m_rep, config.lowess_fraction,
                                config.lowess_iterations, config.confidence_reference);
  }
  StageOutput s2 = stage2_apply(r.stage1, series.stage_forecast, r.state.stage2, config.clamp_floor);
  r.stage2 = std::move(s2.values);
  for (std::size_t i = 0; i < n; ++i) r.clamped[i] = r.clamped[i] || s2.clamped[i];

  r.state.stage3.replicates = config.bootstrap_replicates;
  if (config.stage3_enabled && !fit_rows.empty()) {
    const auto m_s2 = gather(r.stage2);
    std::vector<double> r3(fit_rows.size());
    for (std::size_t k = 0; k < fit_rows.size(); ++k) r3[k] = m_meas[k] - m_s2[k];
    r.state.stage3 = stage3_fit(r3, m_stage, m_delta, config.boost, config.bootstrap_replicates,
                                derive_seed(config.seed, "stage3"));
  }
  r.stage3 = stage3_apply(r.stage2, series.stage_forecast, series.stage_delta, r.state.stage3);
  return r;
}

nlohmann::json to_json(const ResidualPipelineState& s) {
  nlohmann::json knots = nlohmann::json::array();
  for (std::size_t i = 0; i < s.stage2.curve.knots().size(); ++i) {
    knots.push_back({s.stage2.curve.knots()[i], s.stage2.curve.values()[i]});
  }
  return {
      {"ar",
       {{"rho", s.ar.rho}, {"intercept", s.ar.intercept}, {"pairs", s.ar.pairs},
        {"fallback_refits", s.ar.fallbacks}}},
      {"stage1",
       {{"enabled", s.stage1.enabled},
        {"rho", s.stage1.rho},
        {"intercept", s.stage1.intercept},
        {"action_stage", s.stage1.action_stage},
        {"e_action", s.stage1.e_action},
        {"delta_threshold", s.stage1.delta_threshold},
        {"c1", s.stage1.confidence},
        {"n_train", s.stage1.n_train},
        {"warning", s.stage1.warning}}},
      {"stage2",
       {{"enabled", s.stage2.enabled},
        {"fraction", s.stage2.fraction},
        {"robustness_iterations", s.stage2.iterations},
        {"c2", s.stage2.confidence},
        {"curve", knots}}},
      {"stage3", {{"enabled", s.stage3.enabled}, {"replicates", s.stage3.replicates}}},
  };
}

void write_audit_csv(const ResidualSeries& series, const PipelineResult& result,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write audit file " + path.string());
  out << "timestamp,base,ar_corrected,stage1,stage2,stage3,reported,measured,flags\n";
  auto num = [](double v) {
    if (!finite(v)) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string flags;
    auto add = [&flags](const char* f) {
      if (!flags.empty()) flags += '|';
      flags += f;
    };
    if (result.filter_pass[i]) add("filter");
    if (result.clamped[i]) add("clamped");
    if (!series.curve_extrapolated.empty() && series.curve_extrapolated[i]) add("extrapolated");
    out << format_iso8601(series.times[i]) << ',' << num(result.base[i]) << ',' << num(result.ar[i])
        << ',' << num(result.stage1[i]) << ',' << num(result.stage2[i]) << ','
        << num(result.stage3[i]) << ',' << num(series.reported[i]) << ','
        << num(series.measured[i]) << ',' << flags << '\n';
  }
}

}  // namespace rivercast
