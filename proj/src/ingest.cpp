#include "rivercast/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "rivercast/errors.hpp"

namespace rivercast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr auto kHalfHour = std::chrono::minutes(30);

Variable parse_variable(std::string_view s, const std::string& src, std::size_t line) {
  if (s == "stage_ft") return Variable::stage_ft;
  if (s == "rainfall_mm") return Variable::rainfall_mm;
  if (s == "discharge_reported_cfs") return Variable::discharge_reported_cfs;
  if (s == "discharge_measured_cfs") return Variable::discharge_measured_cfs;
  throw ParseError(src, line, "unknown variable '" + std::string(s) + "'");
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                    : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

bool same(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same(a[i], b[i])) return false;
  return true;
}

// Best candidate per hour for an instantaneous series.
struct Pick {
  long offset_s = std::numeric_limits<long>::max();
  Timestamp time{};
  double value = kNaN;
};

void offer(Pick& p, Timestamp hour, Timestamp t, double v) {
  long d = std::labs(static_cast<long>((t - hour).count()));
  if (d < p.offset_s || (d == p.offset_s && t < p.time)) {
    p.offset_s = d;
    p.time = t;
    p.value = v;
  }
}

}  // namespace

std::string to_string(Variable v) {
  switch (v) {
    case Variable::stage_ft: return "stage_ft";
    case Variable::rainfall_mm: return "rainfall_mm";
    case Variable::discharge_reported_cfs: return "discharge_reported_cfs";
    case Variable::discharge_measured_cfs: return "discharge_measured_cfs";
  }
  return "?";
}

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::val: return "val";
    case SplitName::test: return "test";
  }
  return "?";
}

std::size_t HourlyFrame::station_index(const std::string& id) const {
  auto it = std::find(stations.begin(), stations.end(), id);
  if (it == stations.end()) throw ConfigError("unknown station '" + id + "'");
  return static_cast<std::size_t>(it - stations.begin());
}

std::optional<double> HourlyFrame::measurement_near(std::size_t station, Timestamp t) const {
  const auto& m = measured.at(station);
  auto lo = std::lower_bound(m.begin(), m.end(), t - kHalfHour,
                             [](const Measurement& a, Timestamp x) { return a.time < x; });
  std::optional<double> best;
  long best_d = std::numeric_limits<long>::max();
  for (auto it = lo; it != m.end() && it->time <= t + kHalfHour; ++it) {
    long d = std::labs(static_cast<long>((it->time - t).count()));
    if (d < best_d) {
      best_d = d;
      best = it->value;
    }
  }
  return best;
}

bool HourlyFrame::dense_missing(std::size_t hour) const {
  if (std::isnan(rainfall[hour])) return true;
  for (const auto& s : stage)
    if (std::isnan(s[hour])) return true;
  return false;
}

bool HourlyFrame::operator==(const HourlyFrame& o) const {
  if (start != o.start || stations != o.stations || rainfall_id != o.rainfall_id) return false;
  if (!same(rainfall, o.rainfall) || stage.size() != o.stage.size() ||
      reported.size() != o.reported.size() || measured.size() != o.measured.size())
    return false;
  for (std::size_t i = 0; i < stage.size(); ++i)
    if (!same(stage[i], o.stage[i]) || !same(reported[i], o.reported[i])) return false;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    if (measured[i].size() != o.measured[i].size()) return false;
    for (std::size_t k = 0; k < measured[i].size(); ++k)
      if (measured[i][k].time != o.measured[i][k].time ||
          !same(measured[i][k].value, o.measured[i][k].value))
        return false;
  }
  return true;
}

std::vector<Observation> read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  const std::string src = path.string();
  if (!in) throw ParseError(src, 0, "cannot open file");
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line)) throw ParseError(src, 1, "empty file");
  ++n;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "timestamp,station_id,variable,value")
    throw ParseError(src, 1, "expected header 'timestamp,station_id,variable,value'");

  std::vector<Observation> out;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 4) throw ParseError(src, n, "expected 4 fields");
    Observation o;
    try {
      o.time = parse_iso8601(f[0]);
    } catch (const std::invalid_argument&) {
      throw ParseError(src, n, "bad timestamp '" + std::string(f[0]) + "'");
    }
    if (f[1].empty()) throw ParseError(src, n, "empty station_id");
    o.station = std::string(f[1]);
    o.variable = parse_variable(f[2], src, n);
    std::string v(f[3]);
    if (v.empty() || v == "NaN" || v == "nan") {
      o.value = kNaN;
    } else {
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), o.value);
      if (ec != std::errc() || p != v.data() + v.size())
        throw ParseError(src, n, "bad value '" + v + "'");
    }
    out.push_back(std::move(o));
  }
  return out;
}

HourlyFrame resample_hourly(std::span<const Observation> obs,
                            const std::vector<std::string>& stations,
                            const std::string& rainfall_id) {
  if (stations.empty()) throw ConfigError("no stations configured");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < stations.size(); ++i) index[stations[i]] = i;
  auto lookup = [&](const Observation& o) -> std::optional<std::size_t> {
    auto it = index.find(o.station);
    if (it != index.end()) return it->second;
    if (o.station == rainfall_id) return std::nullopt;
    throw ConfigError("observation for unknown station '" + o.station + "'");
  };

  // Grid bounds come from the dense (hourly) variables.
  std::optional<Timestamp> lo, hi;
  for (const auto& o : obs) {
    lookup(o);
    if (o.variable == Variable::discharge_measured_cfs || std::isnan(o.value)) continue;
    Timestamp h = o.variable == Variable::rainfall_mm
                      ? floor_hour(o.time + std::chrono::hours(1) - std::chrono::seconds(1))
                      : floor_hour(o.time + kHalfHour);
    if (!lo || h < *lo) lo = h;
    if (!hi || h > *hi) hi = h;
  }
  if (!lo) throw InsufficientDataError("no hourly observations");

  HourlyFrame f;
  f.start = *lo;
  f.stations = stations;
  f.rainfall_id = rainfall_id;
  const std::size_t n = static_cast<std::size_t>(hours_between(*lo, *hi)) + 1;
  const std::size_t s = stations.size();

  std::vector<std::vector<Pick>> stage(s, std::vector<Pick>(n)), rep(s, std::vector<Pick>(n));
  std::map<std::string, std::vector<double>> rain;
  std::map<std::string, std::vector<char>> rain_seen;
  f.measured.assign(s, {});

  for (const auto& o : obs) {
    if (std::isnan(o.value)) continue;
    auto st = lookup(o);
    switch (o.variable) {
      case Variable::rainfall_mm: {
        Timestamp h = floor_hour(o.time + std::chrono::hours(1) - std::chrono::seconds(1));
        auto i = static_cast<std::size_t>(hours_between(f.start, h));
        auto& r = rain[o.station];
        auto& seen = rain_seen[o.station];
        if (r.empty()) {
          r.assign(n, 0.0);
          seen.assign(n, 0);
        }
        r[i] += o.value;
        seen[i] = 1;
        break;
      }
      case Variable::discharge_measured_cfs:
        if (!st) throw ConfigError("measured discharge needs a gauge station id");
        f.measured[*st].push_back({o.time, o.value});
        break;
      case Variable::stage_ft:
      case Variable::discharge_reported_cfs: {
        if (!st) throw ConfigError("'" + o.station + "' only carries rainfall");
        auto& grid = o.variable == Variable::stage_ft ? stage[*st] : rep[*st];
        Timestamp base = floor_hour(o.time);
        for (Timestamp h : {base, base + std::chrono::hours(1)}) {
          if (h < f.start || h > *hi) continue;
          if (std::chrono::abs(o.time - h) > kHalfHour) continue;
          offer(grid[static_cast<std::size_t>(hours_between(f.start, h))], h, o.time, o.value);
        }
        break;
      }
    }
  }

  f.stage.assign(s, std::vector<double>(n, kNaN));
  f.reported.assign(s, std::vector<double>(n, kNaN));
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      f.stage[k][i] = stage[k][i].value;
      f.reported[k][i] = rep[k][i].value;
    }
  f.rainfall.assign(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    for (auto& [id, r] : rain)
      if (rain_seen[id][i]) {
        sum += r[i];
        ++count;
      }
    if (count > 0) f.rainfall[i] = sum / count;
  }
  for (auto& m : f.measured)
    std::stable_sort(m.begin(), m.end(),
                     [](const Measurement& a, const Measurement& b) { return a.time < b.time; });
  return f;
}

HourlyFrame load_and_resample(std::span<const std::filesystem::path> paths,
                              const std::vector<std::string>& stations,
                              const std::string& rainfall_id) {
  std::vector<Observation> all;
  for (const auto& p : paths) {
    auto o = read_observations(p);
    all.insert(all.end(), std::make_move_iterator(o.begin()), std::make_move_iterator(o.end()));
  }
  return resample_hourly(all, stations, rainfall_id);
}

void write_frame_csv(const HourlyFrame& f, const std::filesystem::path& path) {
  struct Row {
    Timestamp t;
    int order;
    std::string station;
    Variable var;
    double value;
  };
  std::vector<Row> rows;
  const std::size_t n = f.hours();
  for (std::size_t i = 0; i < n; ++i) {
    Timestamp t = f.time(i);
    for (std::size_t k = 0; k < f.stations.size(); ++k) {
      if (!std::isnan(f.stage[k][i]))
        rows.push_back({t, 0, f.stations[k], Variable::stage_ft, f.stage[k][i]});
      if (!std::isnan(f.reported[k][i]))
        rows.push_back({t, 1, f.stations[k], Variable::discharge_reported_cfs, f.reported[k][i]});
    }
    if (!std::isnan(f.rainfall[i]))
      rows.push_back({t, 2, f.rainfall_id, Variable::rainfall_mm, f.rainfall[i]});
  }
  for (std::size_t k = 0; k < f.stations.size(); ++k)
    for (const auto& m : f.measured[k])
      rows.push_back({m.time, 3, f.stations[k], Variable::discharge_measured_cfs, m.value});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.t, a.order) < std::tie(b.t, b.order);
  });

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "timestamp,station_id,variable,value\n";
  for (const auto& r : rows)
    out << format_iso8601(r.t) << ',' << r.station << ',' << to_string(r.var) << ','
        << fmt(r.value) << '\n';
}

SplitRanges split(const HourlyFrame& frame, std::span<const double> pct, int window) {
  if (pct.size() != 3) throw ContractError("split needs three percentages");
  for (double p : pct)
    if (!(p >= 0.0)) throw ContractError("split percentages must be non-negative");
  if (std::abs(pct[0] + pct[1] + pct[2] - 100.0) > 1e-9)
    throw ContractError("split percentages must sum to 100");
  if (window < 1) throw ContractError("window must be positive");
  const std::size_t n = frame.hours();
  if (n < 3 * static_cast<std::size_t>(window))
    throw InsufficientDataError("series of " + std::to_string(n) + " h is shorter than 3 windows");
  auto a = static_cast<std::size_t>(std::llround(static_cast<double>(n) * pct[0] / 100.0));
  auto b = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * (pct[0] + pct[1]) / 100.0));
  a = std::min(a, n);
  b = std::clamp(b, a, n);
  return {{0, a}, {a, b}, {b, n}};
}

std::vector<WindowRef> make_windows(const HourlyFrame& f, std::size_t target, int window,
                                    int horizon) {
  if (window < 1 || horizon < 1) throw ContractError("window and horizon must be positive");
  if (target >= f.stations.size()) throw ContractError("target station out of range");
  const std::size_t n = f.hours();
  const auto T = static_cast<std::size_t>(window), h = static_cast<std::size_t>(horizon);
  std::vector<WindowRef> out;
  if (n < T + h) return out;

  // Length of the run of complete hours ending at each index.
  std::vector<std::size_t> run(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    run[i] = f.dense_missing(i) ? 0 : (i > 0 ? run[i - 1] : 0) + 1;

  for (std::size_t o = T - 1; o + h < n; ++o) {
    if (run[o] < T) continue;
    const std::size_t t = o + h;
    double st = f.stage[target][t], rep = f.reported[target][t];
    if (std::isnan(st) || std::isnan(rep)) continue;
    out.push_back({o, t, st, rep, f.measurement_near(target, f.time(t))});
  }
  return out;
}

ForecastWindow extract_window(const HourlyFrame& f, const WindowRef& ref, int window,
                              int horizon) {
  const auto T = static_cast<std::size_t>(window);
  if (ref.origin + 1 < T) throw ContractError("window starts before the series");
  ForecastWindow w;
  w.stage_series.resize(window, static_cast<Eigen::Index>(f.stations.size()));
  w.rainfall_series.resize(T);
  const std::size_t first = ref.origin + 1 - T;
  for (std::size_t r = 0; r < T; ++r) {
    for (std::size_t k = 0; k < f.stations.size(); ++k)
      w.stage_series(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          f.stage[k][first + r];
    w.rainfall_series[r] = f.rainfall[first + r];
  }
  w.origin = f.time(ref.origin);
  w.horizon = horizon;
  return w;
}

SplitName assign_split(const SplitRanges& r, const WindowRef& ref) {
  if (r.train.contains(ref.target_hour)) return SplitName::train;
  if (r.val.contains(ref.target_hour)) return SplitName::val;
  return SplitName::test;
}

NormStats fit_norm_stats(const HourlyFrame& f, const HourRange& train,
                         std::span<const double> targets) {
  auto moments = [](auto&& begin, auto&& end, const std::string& what) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (auto it = begin; it != end; ++it) {
      if (std::isnan(*it)) continue;
      sum += *it;
      ++n;
    }
    if (n < 2) throw InsufficientDataError("too few training values for " + what);
    double mean = sum / static_cast<double>(n);
    for (auto it = begin; it != end; ++it)
      if (!std::isnan(*it)) sq += (*it - mean) * (*it - mean);
    double sd = std::sqrt(sq / static_cast<double>(n));
    if (!(sd > 1e-12)) throw ContractError("constant channel: " + what);
    return std::pair{mean, sd};
  };
  NormStats s;
  auto b = static_cast<std::ptrdiff_t>(train.begin), e = static_cast<std::ptrdiff_t>(train.end);
  for (std::size_t k = 0; k < f.stations.size(); ++k) {
    auto [m, sd] = moments(f.stage[k].begin() + b, f.stage[k].begin() + e,
                           "stage at " + f.stations[k]);
    s.stage_mean.push_back(m);
    s.stage_std.push_back(sd);
  }
  std::tie(s.rain_mean, s.rain_std) =
      moments(f.rainfall.begin() + b, f.rainfall.begin() + e, "rainfall");
  std::tie(s.target_mean, s.target_std) = moments(targets.begin(), targets.end(), "target");
  return s;
}

SequenceData normalize(const HourlyFrame& f, const NormStats& s) {
  const std::size_t n = f.hours(), N = f.stations.size();
  if (s.stage_mean.size() != N) throw DimensionError("normalization stats do not match stations");
  SequenceData d;
  d.stage.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(N));
  d.rain.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < N; ++k)
      d.stage(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          (f.stage[k][i] - s.stage_mean[k]) / s.stage_std[k];
    d.rain[i] = (f.rainfall[i] - s.rain_mean) / s.rain_std;
  }
  return d;
}

}  // namespace rivercast
