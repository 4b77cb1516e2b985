#include "rivercast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/seeding.hpp"

namespace rivercast {

namespace {

// 1 mm of runoff per hour over 1 km^2, in cubic feet per second.
constexpr double kMmKm2PerHourToCfs = 1000.0 / 3600.0 * 35.314666721488590;

struct Storm {
  std::size_t start = 0;
  std::size_t duration = 1;
  double depth_mm = 0.0;
  std::vector<double> factor;  // per station
};

std::vector<Storm> draw_storms(const SynthScenario& s, std::size_t n_hours) {
  std::mt19937_64 rng(derive_seed(s.seed, "synth/rain"));
  std::exponential_distribution<double> gap(s.storm_rate_per_day / 24.0);
  std::exponential_distribution<double> dur(1.0 / s.storm_duration_mean_h);
  std::exponential_distribution<double> depth(1.0 / s.storm_depth_mean_mm);
  std::normal_distribution<double> spread(0.0, 1.0);
  std::vector<Storm> storms;
  double t = gap(rng);
  while (t < static_cast<double>(n_hours)) {
    Storm st;
    st.start = static_cast<std::size_t>(t);
    st.duration = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dur(rng))));
    st.depth_mm = depth(rng);
    for (std::size_t k = 0; k < s.stations.size(); ++k)
      st.factor.push_back(std::exp(s.spatial_sigma * spread(rng) -
                                   0.5 * s.spatial_sigma * s.spatial_sigma));
    storms.push_back(std::move(st));
    t += gap(rng);
  }
  return storms;
}

RatingCurveSet make_curve(const SynthStation& st, const SynthScenario& s, Timestamp end) {
  auto pieces = [&](double shift) {
    double off = st.curve_offset_ft + shift;
    double brk = st.curve_break_ft + shift;
    double top = st.curve_top_ft + shift;
    CurvePiece lower{off + 0.5, brk, off, st.curve_coefficient, st.curve_exponent};
    double q_break = lower.flow(brk);
    double a2 = q_break / std::pow(brk - off, st.upper_exponent);
    CurvePiece upper{brk, top, off, a2, st.upper_exponent};
    return std::vector<CurvePiece>{lower, upper};
  };
  std::vector<CurveSegment> segs;
  if (s.curve_shift_ft == 0.0) {
    segs.push_back({s.start, end, pieces(0.0)});
  } else {
    Timestamp mid = s.start + Hours((end - s.start).count() / 3600 / 2);
    segs.push_back({s.start, mid, pieces(0.0)});
    segs.push_back({mid, end, pieces(s.curve_shift_ft)});
  }
  return RatingCurveSet(st.id, std::move(segs));
}

// Upstream stations first.
std::vector<std::size_t> routing_order(const SynthScenario& s) {
  const std::size_t n = s.stations.size();
  std::vector<int> depth(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int d = 0;
    for (int j = static_cast<int>(i); s.stations[j].downstream >= 0; j = s.stations[j].downstream) {
      if (++d > static_cast<int>(n)) throw ContractError("station network contains a cycle");
    }
    depth[i] = d;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });
  return order;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SynthScenario SynthScenario::default_scenario() {
  SynthScenario s;
  SynthStation target;
  target.id = "stn_0";
  target.area_km2 = 150.0;
  target.catchment_k_h = 6.0;
  target.baseflow_cfs = 40.0;
  target.curve_coefficient = 30.0;

  SynthStation near;
  near.id = "stn_1";
  near.downstream = 0;
  near.reach_km = 12.0;
  near.area_km2 = 250.0;
  near.catchment_k_h = 8.0;
  near.reach_k_h = 3.0;
  near.baseflow_cfs = 50.0;
  near.curve_coefficient = 22.0;

  SynthStation far;
  far.id = "stn_2";
  far.downstream = 0;
  far.reach_km = 30.0;
  far.area_km2 = 300.0;
  far.catchment_k_h = 10.0;
  far.reach_k_h = 6.0;
  far.baseflow_cfs = 60.0;
  far.curve_coefficient = 25.0;

  s.stations = {target, near, far};
  s.target = 0;
  return s;
}

void SynthScenario::validate() const {
  const std::size_t n = stations.size();
  if (n < 2 || n > 5) throw ContractError("synthetic scenario needs 2 to 5 stations");
  if (target >= n) throw ContractError("target station out of range");
  if (stations[target].downstream != -1) throw ContractError("target station must be the outlet");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& st = stations[i];
    if (st.id.empty()) throw ContractError("station id must not be empty");
    for (std::size_t j = 0; j < i; ++j)
      if (stations[j].id == st.id) throw ContractError("duplicate station id " + st.id);
    if (i != target) {
      if (st.downstream < 0 || static_cast<std::size_t>(st.downstream) >= n ||
          static_cast<std::size_t>(st.downstream) == i)
        throw ContractError("station " + st.id + " needs a valid downstream station");
      if (!(st.reach_km > 0.0)) throw ContractError("reach length must be positive");
      if (!(st.reach_k_h >= 1.0)) throw ContractError("reach constant must be at least 1 h");
    } else if (st.downstream != -1) {
      throw ContractError("only the target may be an outlet");
    }
    if (!(st.area_km2 > 0.0) || !(st.catchment_k_h >= 1.0) || !(st.baseflow_cfs > 0.0))
      throw ContractError("station " + st.id + " has non-positive hydrology parameters");
    if (!(st.curve_coefficient > 0.0) || !(st.curve_exponent > 0.0) ||
        !(st.upper_exponent > 0.0) || !(st.curve_break_ft > st.curve_offset_ft + 0.5) ||
        !(st.curve_top_ft > st.curve_break_ft))
      throw ContractError("station " + st.id + " has an invalid rating curve");
  }
  for (std::size_t i = 0; i < n; ++i)
    if (i != target && stations[i].downstream == -1)
      throw ContractError("every non-target station must drain somewhere");
  routing_order(*this);
  if (!(storm_rate_per_day > 0.0) || !(storm_duration_mean_h > 0.0) ||
      !(storm_depth_mean_mm > 0.0) || !(spatial_sigma >= 0.0) || !(runoff_coefficient > 0.0) ||
      runoff_coefficient > 1.0 || !(slow_fraction >= 0.0 && slow_fraction <= 1.0) ||
      !(slow_k_h >= 1.0))
    throw ContractError("invalid rainfall or runoff parameters");
  if (!(kappa >= 0.0)) throw ContractError("kappa must be non-negative");
  if (!(sigma_meas >= 0.0 && sigma_meas <= 0.05))
    throw ContractError("sigma_meas must lie in [0, 0.05]");
  if (measurement_interval_h < 1 || measurement_jitter_h < 0 ||
      2 * measurement_jitter_h >= measurement_interval_h)
    throw ContractError("measurement schedule needs interval >= 1 and jitter < interval / 2");
  if (n_days < 30) throw ContractError("synthetic series must cover at least 30 days");
}

SynthScenario scenario_from_json(const nlohmann::json& j) {
  SynthScenario s = SynthScenario::default_scenario();
  if (j.contains("stations")) {
    s.stations.clear();
    for (const auto& sj : j.at("stations")) {
      SynthStation st;
      st.id = sj.at("id").get<std::string>();
      st.downstream = sj.value("downstream", -1);
      st.reach_km = sj.value("reach_km", st.reach_km);
      st.area_km2 = sj.value("area_km2", st.area_km2);
      st.catchment_k_h = sj.value("catchment_k_h", st.catchment_k_h);
      st.reach_k_h = sj.value("reach_k_h", st.reach_k_h);
      st.baseflow_cfs = sj.value("baseflow_cfs", st.baseflow_cfs);
      st.curve_offset_ft = sj.value("curve_offset_ft", st.curve_offset_ft);
      st.curve_coefficient = sj.value("curve_coefficient", st.curve_coefficient);
      st.curve_exponent = sj.value("curve_exponent", st.curve_exponent);
      st.curve_break_ft = sj.value("curve_break_ft", st.curve_break_ft);
      st.upper_exponent = sj.value("upper_exponent", st.upper_exponent);
      st.curve_top_ft = sj.value("curve_top_ft", st.curve_top_ft);
      s.stations.push_back(std::move(st));
    }
    s.target = j.value("target", std::size_t{0});
  }
  s.storm_rate_per_day = j.value("storm_rate_per_day", s.storm_rate_per_day);
  s.storm_duration_mean_h = j.value("storm_duration_mean_h", s.storm_duration_mean_h);
  s.storm_depth_mean_mm = j.value("storm_depth_mean_mm", s.storm_depth_mean_mm);
  s.spatial_sigma = j.value("spatial_sigma", s.spatial_sigma);
  s.runoff_coefficient = j.value("runoff_coefficient", s.runoff_coefficient);
  s.slow_fraction = j.value("slow_fraction", s.slow_fraction);
  s.slow_k_h = j.value("slow_k_h", s.slow_k_h);
  s.kappa = j.value("kappa", s.kappa);
  s.sigma_meas = j.value("sigma_meas", s.sigma_meas);
  s.measurement_interval_h = j.value("measurement_interval_h", s.measurement_interval_h);
  s.measurement_jitter_h = j.value("measurement_jitter_h", s.measurement_jitter_h);
  s.action_level_ft = j.value("action_level_ft", s.action_level_ft);
  s.curve_shift_ft = j.value("curve_shift_ft", s.curve_shift_ft);
  s.n_days = j.value("n_days", s.n_days);
  if (j.contains("start")) s.start = parse_iso8601(j.at("start").get<std::string>());
  s.seed = j.value("seed", s.seed);
  return s;
}

nlohmann::json to_json(const SynthScenario& s) {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& x : s.stations)
    st.push_back({{"id", x.id},
                  {"downstream", x.downstream},
                  {"reach_km", x.reach_km},
                  {"area_km2", x.area_km2},
                  {"catchment_k_h", x.catchment_k_h},
                  {"reach_k_h", x.reach_k_h},
                  {"baseflow_cfs", x.baseflow_cfs},
                  {"curve_offset_ft", x.curve_offset_ft},
                  {"curve_coefficient", x.curve_coefficient},
                  {"curve_exponent", x.curve_exponent},
                  {"curve_break_ft", x.curve_break_ft},
                  {"upper_exponent", x.upper_exponent},
                  {"curve_top_ft", x.curve_top_ft}});
  return {{"stations", st},
          {"target", s.target},
          {"storm_rate_per_day", s.storm_rate_per_day},
          {"storm_duration_mean_h", s.storm_duration_mean_h},
          {"storm_depth_mean_mm", s.storm_depth_mean_mm},
          {"spatial_sigma", s.spatial_sigma},
          {"runoff_coefficient", s.runoff_coefficient},
          {"slow_fraction", s.slow_fraction},
          {"slow_k_h", s.slow_k_h},
          {"kappa", s.kappa},
          {"sigma_meas", s.sigma_meas},
          {"measurement_interval_h", s.measurement_interval_h},
          {"measurement_jitter_h", s.measurement_jitter_h},
          {"action_level_ft", s.action_level_ft},
          {"curve_shift_ft", s.curve_shift_ft},
          {"n_days", s.n_days},
          {"start", format_iso8601(s.start)},
          {"seed", s.seed}};
}

SynthResult generate(const SynthScenario& scenario) {
  scenario.validate();
  const std::size_t n = static_cast<std::size_t>(scenario.n_days) * 24;
  const std::size_t S = scenario.stations.size();
  const Timestamp end = scenario.start + Hours(static_cast<long>(n));
  const auto storms = draw_storms(scenario, n);
  const auto order = routing_order(scenario);

  std::vector<RatingCurveSet> curves;
  for (const auto& st : scenario.stations) curves.push_back(make_curve(st, scenario, end));

  double total_area = 0.0;
  for (const auto& st : scenario.stations) total_area += st.area_km2;

  SynthResult r{scenario, {}, WatershedGraph({"a"}, 0, {}), curves, {}, {}, 1.0, {}};

  // Flows for a given storm depth multiplier.
  std::vector<std::vector<double>> rain;
  auto simulate = [&](double scale) {
    rain.assign(S, std::vector<double>(n, 0.0));
    for (const auto& st : storms)
      for (std::size_t t = st.start; t < std::min(n, st.start + st.duration); ++t)
        for (std::size_t k = 0; k < S; ++k)
          rain[k][t] += scale * st.depth_mm * st.factor[k] / static_cast<double>(st.duration);

    std::vector<std::vector<double>> flow(S, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> runoff(S, std::vector<double>(n, 0.0));
    // Inflow routed from upstream reaches into each station.
    std::vector<std::vector<double>> routed_in(S, std::vector<double>(n, 0.0));
    std::vector<double> upstream_base(S, 0.0);
    for (std::size_t k : order) {
      double base_total = scenario.stations[k].baseflow_cfs + upstream_base[k];
      if (int d = scenario.stations[k].downstream; d >= 0) upstream_base[d] += base_total;
    }
    for (std::size_t k : order) {
      const auto& st = scenario.stations[k];
      // Quick flow through two equal linear reservoirs in series, the rest
      // through one slow groundwater reservoir.
      double s1 = 0.0, s2 = 0.0, slow = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        runoff[k][t] = kMmKm2PerHourToCfs * scenario.runoff_coefficient * rain[k][t] * st.area_km2;
        s1 += (1.0 - scenario.slow_fraction) * runoff[k][t];
        slow += scenario.slow_fraction * runoff[k][t];
        double mid = s1 / st.catchment_k_h;
        s1 -= mid;
        s2 += mid;
        double out = s2 / st.catchment_k_h + slow / scenario.slow_k_h;
        s2 -= s2 / st.catchment_k_h;
        slow -= slow / scenario.slow_k_h;
        flow[k][t] = st.baseflow_cfs + out + routed_in[k][t];
      }
      if (st.downstream >= 0) {
        // Reach storage starts at the baseflow steady state.
        double storage = st.reach_k_h * (st.baseflow_cfs + upstream_base[k]);
        for (std::size_t t = 0; t < n; ++t) {
          storage += flow[k][t];
          double out = storage / st.reach_k_h;
          storage -= out;
          routed_in[st.downstream][t] += out;
        }
      }
    }
    return std::pair{flow, runoff};
  };

  const std::size_t required = std::max<std::size_t>(1, static_cast<std::size_t>(scenario.n_days) / 90);
  std::vector<std::vector<double>> flow, runoff, stage;
  for (int attempt = 0;; ++attempt) {
    std::tie(flow, runoff) = simulate(r.depth_scale);
    stage.assign(S, std::vector<double>(n));
    for (std::size_t k = 0; k < S; ++k)
      for (std::size_t t = 0; t < n; ++t)
        stage[k][t] = curves[k].to_stage(flow[k][t], scenario.start + Hours(static_cast<long>(t)));
    r.events = extract_flood_events(stage[scenario.target], scenario.action_level_ft);
    if (r.events.size() >= required) break;
    if (attempt == 12) {
      r.log.push_back("flood rate still below one event per 90 days after widening storm depth");
      break;
    }
    r.depth_scale *= 1.25;
    r.log.push_back("only " + std::to_string(r.events.size()) + " flood events (need " +
                    std::to_string(required) + "); storm depth scale -> " +
                    fmt(r.depth_scale));
  }

  // Hysteresis and field measurements.
  r.truth.steady_cfs.assign(S, std::vector<double>(n));
  r.truth.true_cfs.assign(S, std::vector<double>(n));
  r.truth.runoff_input_cfs = runoff;
  HourlyFrame& f = r.frame;
  f.start = scenario.start;
  f.rainfall_id = "watershed";
  f.rainfall.assign(n, 0.0);
  for (std::size_t k = 0; k < S; ++k) {
    f.stations.push_back(scenario.stations[k].id);
    for (std::size_t t = 0; t < n; ++t)
      f.rainfall[t] += rain[k][t] * scenario.stations[k].area_km2 / total_area;
  }
  f.stage = stage;
  f.reported.assign(S, std::vector<double>(n));
  f.measured.assign(S, {});
  for (std::size_t k = 0; k < S; ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      Timestamp ts = scenario.start + Hours(static_cast<long>(t));
      double q = curves[k].to_flow(stage[k][t], ts).discharge;
      double dh = t > 0 ? stage[k][t] - stage[k][t - 1] : 0.0;
      r.truth.steady_cfs[k][t] = q;
      f.reported[k][t] = q;
      r.truth.true_cfs[k][t] = q * std::max(0.05, 1.0 + scenario.kappa * dh);
    }
    const auto& id = scenario.stations[k].id;
    std::mt19937_64 sched(derive_seed(scenario.seed, "synth/schedule/" + id));
    std::mt19937_64 noise(derive_seed(scenario.seed, "synth/noise/" + id));
    std::uniform_int_distribution<int> jitter(-scenario.measurement_jitter_h,
                                              scenario.measurement_jitter_h);
    std::normal_distribution<double> eps(0.0, 1.0);
    for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(scenario.measurement_interval_h)) {
      long t = static_cast<long>(base) + jitter(sched);
      double e = eps(noise);
      if (t < 0 || t >= static_cast<long>(n)) continue;
      double v = r.truth.true_cfs[k][static_cast<std::size_t>(t)] *
                 std::max(0.5, 1.0 + scenario.sigma_meas * e);
      f.measured[k].push_back({scenario.start + Hours(t), v});
    }
  }

  std::vector<std::string> ids;
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < S; ++k) {
    ids.push_back(scenario.stations[k].id);
    if (int d = scenario.stations[k].downstream; d >= 0)
      edges.push_back({k, static_cast<std::size_t>(d), scenario.stations[k].reach_km});
  }
  r.graph = WatershedGraph(ids, scenario.target, edges);
  return r;
}

std::vector<std::filesystem::path> write_synth_outputs(const SynthResult& r,
                                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  out.push_back(dir / "data.csv");
  write_frame_csv(r.frame, out.back());
  out.push_back(dir / "graph.json");
  save_graph(r.graph, out.back());
  out.push_back(dir / "rating_curves.json");
  save_rating_curves(r.curves, out.back());

  const auto& f = r.frame;
  const bool injected = r.scenario.kappa > 0.0 || r.scenario.sigma_meas > 0.0;
  out.push_back(dir / "ground_truth.csv");
  {
    std::ofstream g(out.back());
    g << "timestamp,station_id,stage_ft,reported_cfs,true_cfs,injected_pct_error\n";
    for (std::size_t t = 0; t < f.hours(); ++t)
      for (std::size_t k = 0; k < f.stations.size(); ++k) {
        double rep = r.truth.steady_cfs[k][t], tru = r.truth.true_cfs[k][t];
        g << format_iso8601(f.time(t)) << ',' << f.stations[k] << ',' << fmt(f.stage[k][t]) << ','
          << fmt(rep) << ',' << fmt(tru) << ',' << fmt(100.0 * (rep - tru) / rep) << '\n';
      }
  }
  out.push_back(dir / "events.csv");
  {
    std::ofstream e(out.back());
    e << "event,station_id,start,end,hours,peak_stage_ft,peak_time\n";
    const auto& st = f.stage[r.scenario.target];
    for (std::size_t i = 0; i < r.events.size(); ++i) {
      const auto& ev = r.events[i];
      std::size_t peak = ev.start;
      for (std::size_t t = ev.start; t <= ev.end; ++t)
        if (st[t] > st[peak]) peak = t;
      e << i << ',' << f.stations[r.scenario.target] << ',' << format_iso8601(f.time(ev.start))
        << ',' << format_iso8601(f.time(ev.end)) << ',' << ev.length() << ',' << fmt(st[peak])
        << ',' << format_iso8601(f.time(peak)) << '\n';
    }
  }
  out.push_back(dir / "scenario.json");
  {
    nlohmann::json j = to_json(r.scenario);
    j["injected_error"] = injected;
    j["depth_scale"] = r.depth_scale;
    j["flood_events"] = r.events.size();
    j["log"] = r.log;
    std::ofstream s(out.back());
    s << j.dump(2) << '\n';
  }
  return out;
}

}  // namespace rivercast
