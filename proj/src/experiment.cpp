#include "rivercast/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/QR>

#include "rivercast/errors.hpp"
#include "rivercast/metrics.hpp"
#include "rivercast/seeding.hpp"

namespace rivercast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string suffix(int h) { return "_h" + std::to_string(h); }

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<std::string> kNeural{"mlp", "plain_gru", "dcrnn_direct"};

bool is_neural(const std::string& n) {
  return std::find(kNeural.begin(), kNeural.end(), n) != kNeural.end();
}

ModelConfig model_config(const Dataset& d, const HorizonData& hd, int diffusion_steps,
                         Architecture arch, TargetKind target) {
  ModelConfig c;
  c.architecture = arch;
  c.target = target;
  c.n_nodes = d.graph.n_nodes();
  c.target_node = d.target();
  c.diffusion_steps = diffusion_steps;
  c.window = hd.window;
  c.horizon = hd.horizon;
  return c;
}

TrainingData training_data(const HorizonData& hd, bool discharge) {
  TrainingData td;
  td.data = &hd.data;
  for (std::size_t i = 0; i < hd.windows.size(); ++i) {
    const auto& w = hd.windows[i];
    double y = discharge ? w.target_reported : w.target_stage;
    if (hd.split_of[i] == SplitName::train) {
      td.train_origins.push_back(w.origin);
      td.train_targets.push_back(y);
    } else if (hd.split_of[i] == SplitName::val) {
      td.val_origins.push_back(w.origin);
      td.val_targets.push_back(y);
    }
  }
  return td;
}

SplitName parse_split(const std::string& s) {
  if (s == "train") return SplitName::train;
  if (s == "val") return SplitName::val;
  if (s == "test") return SplitName::test;
  throw ParseError("forecast table", 0, "unknown split '" + s + "'");
}

nlohmann::json grid_json(const TrainResult& r) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& g : r.records)
    recs.push_back({{"batch_size", g.point.batch_size},
                    {"learning_rate", g.point.learning_rate},
                    {"hidden", g.point.hidden},
                    {"decoder_layers", g.point.decoder_layers},
                    {"best_val_loss", g.diverged ? nlohmann::json(nullptr)
                                                 : nlohmann::json(g.best_val_loss)},
                    {"diverged", g.diverged},
                    {"epochs_run", g.epochs_run}});
  return {{"selected", r.selected}, {"grid", recs}};
}

}  // namespace

const RatingCurveSet& Dataset::target_curve() const {
  return find_curve(curves, graph.node_ids()[graph.target()]);
}

Dataset load_dataset(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  auto or_default = [&](const std::filesystem::path& p, const char* name) {
    return p.empty() ? out_dir / name : p;
  };
  std::vector<std::filesystem::path> csv = c.data_csv;
  if (csv.empty()) csv.push_back(out_dir / "data.csv");
  WatershedGraph graph = load_graph(or_default(c.graph_path, "graph.json"));
  HourlyFrame frame = load_and_resample(csv, graph.node_ids(), c.rainfall_id);
  auto curves = load_rating_curves(or_default(c.rating_curve_path, "rating_curves.json"));
  Dataset d{std::move(frame), std::move(graph), std::move(curves)};
  d.target_curve();
  return d;
}

Dataset dataset_from_synth(const SynthResult& s) { return {s.frame, s.graph, s.curves}; }

std::vector<std::size_t> HorizonData::rows(SplitName s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (split_of[i] == s) out.push_back(i);
  return out;
}

HorizonData prepare_horizon(const Dataset& d, int window, int horizon,
                            std::span<const double> pct) {
  HorizonData hd;
  hd.window = window;
  hd.horizon = horizon;
  hd.ranges = split(d.frame, pct, window);
  hd.windows = make_windows(d.frame, d.target(), window, horizon);
  std::vector<double> stage_y, flow_y;
  for (const auto& w : hd.windows) {
    hd.split_of.push_back(assign_split(hd.ranges, w));
    if (hd.split_of.back() == SplitName::train) {
      stage_y.push_back(w.target_stage);
      flow_y.push_back(w.target_reported);
    }
  }
  if (stage_y.size() < 2) throw InsufficientDataError("fewer than two training windows");
  hd.stage_norm = fit_norm_stats(d.frame, hd.ranges.train, stage_y);
  hd.discharge_norm = fit_norm_stats(d.frame, hd.ranges.train, flow_y);
  hd.data = normalize(d.frame, hd.stage_norm);
  return hd;
}

double stage_to_discharge(const RatingCurveSet& curve, double stage, Timestamp t,
                          bool* extrapolated) {
  const auto& seg = curve.segment_at(t);
  const double floor = seg.pieces.front().offset + 1e-3;
  bool raised = false;
  if (!(stage > floor)) {
    stage = floor;
    raised = true;
  }
  FlowResult r = curve.to_flow(stage, t);
  if (extrapolated) *extrapolated = r.extrapolated || raised;
  return r.discharge;
}

Matrix flatten_windows(const SequenceData& data, std::span<const std::size_t> origins, int window) {
  const auto n = data.stage.cols();
  const auto T = static_cast<Eigen::Index>(window);
  Matrix x(static_cast<Eigen::Index>(origins.size()), T * (n + 1));
  for (std::size_t b = 0; b < origins.size(); ++b) {
    if (origins[b] + 1 < static_cast<std::size_t>(window))
      throw ContractError("window starts before the series");
    const auto start = static_cast<Eigen::Index>(origins[b]) + 1 - T;
    const auto row = static_cast<Eigen::Index>(b);
    for (Eigen::Index s = 0; s < T; ++s) {
      x.row(row).segment(s * (n + 1), n) = data.stage.row(start + s);
      x(row, s * (n + 1) + n) = data.rain[static_cast<std::size_t>(start + s)];
    }
  }
  return x;
}

void LinearBaseline::fit(const Matrix& x, std::span<const double> y) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()) || x.rows() == 0)
    throw DimensionError("linear baseline: rows and targets differ");
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
  coef_ = sol.head(x.cols());
  intercept_ = sol(x.cols());
}

double LinearBaseline::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (row.size() != coef_.size()) throw DimensionError("linear baseline: feature count mismatch");
  return row.dot(coef_) + intercept_;
}

std::vector<double> LinearBaseline::predict(const Matrix& x) const {
  if (x.cols() != coef_.size()) throw DimensionError("linear baseline: feature count mismatch");
  Vector y = x * coef_;
  y.array() += intercept_;
  return {y.data(), y.data() + y.size()};
}

nlohmann::json LinearBaseline::to_json() const {
  return {{"format", "rivercast.linear"},
          {"version", 1},
          {"coef", std::vector<double>(coef_.data(), coef_.data() + coef_.size())},
          {"intercept", intercept_}};
}

LinearBaseline LinearBaseline::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "rivercast.linear") throw ConfigError("not a linear baseline file");
  LinearBaseline m;
  auto c = j.at("coef").get<std::vector<double>>();
  m.coef_ = Eigen::Map<Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  m.intercept_ = j.at("intercept").get<double>();
  return m;
}

TrainOptions train_options(const ExperimentConfig& c, const std::string& name, int horizon) {
  TrainOptions o;
  o.grid = c.grid;
  o.max_epochs = c.max_epochs;
  o.patience = c.patience;
  o.clip_norm = c.clip_norm;
  o.seed = derive_seed(c.seed, "train/" + name + suffix(horizon));
  return o;
}

ModelSet train_models(const Dataset& d, const HorizonData& hd, const ExperimentConfig& c,
                      const std::vector<std::string>& only) {
  auto wanted = [&](const std::string& n) {
    return only.empty() || std::find(only.begin(), only.end(), n) != only.end();
  };
  const TransitionSet tr = build_transitions(d.graph, c.diffusion_steps);
  const TrainingData stage_td = training_data(hd, false);
  ModelSet m;
  m.horizon = hd.horizon;
  m.baselines = c.baselines;

  auto fit_neural = [&](const std::string& name, Architecture arch, TargetKind kind) {
    const bool q = kind == TargetKind::discharge;
    TrainingData td = q ? training_data(hd, true) : stage_td;
    TrainResult r = train(model_config(d, hd, c.diffusion_steps, arch, kind),
                          q ? hd.discharge_norm : hd.stage_norm, tr, td,
                          train_options(c, name, hd.horizon));
    BaseModel model = r.model;
    m.training.emplace(name, std::move(r));
    return model;
  };

  if (wanted("base")) m.base = fit_neural("base", Architecture::graph_gru, TargetKind::stage);
  for (const auto& b : c.baselines) {
    if (!wanted(b)) continue;
    if (b == "mlp") {
      m.neural.emplace(b, fit_neural(b, Architecture::mlp, TargetKind::stage));
    } else if (b == "plain_gru") {
      m.neural.emplace(b, fit_neural(b, Architecture::plain_gru, TargetKind::stage));
    } else if (b == "dcrnn_direct") {
      m.neural.emplace(b, fit_neural(b, Architecture::graph_gru, TargetKind::discharge));
    } else if (b == "linear" || b == "gbt") {
      Matrix x = flatten_windows(hd.data, stage_td.train_origins, hd.window);
      if (b == "linear") {
        m.linear.emplace();
        m.linear->fit(x, stage_td.train_targets);
      } else {
        m.gbt.emplace();
        m.gbt->fit(x, stage_td.train_targets, c.gbt_params);
      }
    }
  }
  return m;
}

std::vector<std::filesystem::path> save_models(const ModelSet& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  const std::string sfx = suffix(m.horizon);
  auto meta = [&](const std::string& name) {
    nlohmann::json j{{"model", name}, {"horizon", m.horizon}};
    if (auto it = m.training.find(name); it != m.training.end()) j["training"] = grid_json(it->second);
    return j;
  };
  out.push_back(dir / ("base" + sfx + ".json"));
  save_model(m.base, out.back(), meta("base"));
  for (const auto& [name, model] : m.neural) {
    out.push_back(dir / (name + sfx + ".json"));
    save_model(model, out.back(), meta(name));
  }
  auto write_json = [&](const std::string& name, const nlohmann::json& j) {
    out.push_back(dir / (name + sfx + ".json"));
    std::ofstream f(out.back());
    f << j.dump() << '\n';
  };
  if (m.linear) write_json("linear", m.linear->to_json());
  if (m.gbt) {
    nlohmann::json j{{"format", "rivercast.gbt"}, {"version", 1}, {"model", m.gbt->to_json()}};
    write_json("gbt", j);
  }
  for (const auto& [name, r] : m.training) {
    out.push_back(dir / ("train_log_" + name + sfx + ".csv"));
    write_training_log(r.records.at(r.selected), out.back());
  }
  return out;
}

ModelSet load_models(const std::filesystem::path& dir, int horizon,
                     const std::vector<std::string>& baselines) {
  ModelSet m;
  m.horizon = horizon;
  m.baselines = baselines;
  const std::string sfx = suffix(horizon);
  auto path = [&](const std::string& name) {
    auto p = dir / (name + sfx + ".json");
    if (!std::filesystem::exists(p)) throw ConfigError("missing checkpoint " + p.string());
    return p;
  };
  m.base = load_model(path("base"));
  if (m.base.config.horizon != horizon) throw ConfigError("checkpoint horizon mismatch");
  for (const auto& b : baselines) {
    if (is_neural(b)) {
      m.neural.emplace(b, load_model(path(b)));
    } else if (b == "linear" || b == "gbt") {
      std::ifstream f(path(b));
      nlohmann::json j = nlohmann::json::parse(f);
      if (b == "linear") {
        m.linear = LinearBaseline::from_json(j);
      } else {
        if (j.value("format", "") != "rivercast.gbt") throw ConfigError("not a gbt baseline file");
        m.gbt = BoostedTrees::from_json(j.at("model"));
      }
    }
  }
  return m;
}

const std::vector<double>& ForecastTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  if (name == "ar") return ar;
  if (name == "stage1") return stage1;
  if (name == "stage2") return stage2;
  if (name == "stage3") return stage3;
  if (name == "reported") return reported;
  throw ContractError("no forecast column '" + name + "'");
}

ForecastTable make_forecasts(const Dataset& d, const HorizonData& hd, ModelSet& m,
                             const TransitionSet& tr) {
  ForecastTable t;
  t.horizon = hd.horizon;
  if (hd.windows.empty()) return t;
  const auto& f = d.frame;
  const std::size_t tgt = d.target();
  const std::size_t first = hd.windows.front().target_hour;
  const std::size_t last = hd.windows.back().target_hour;
  const std::size_t n = last - first + 1;
  const auto& curve = d.target_curve();

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t hour = first + i;
    t.time.push_back(f.time(hour));
    t.split.push_back(hd.ranges.train.contains(hour) ? SplitName::train
                      : hd.ranges.val.contains(hour) ? SplitName::val
                                                     : SplitName::test);
    t.stage_obs.push_back(f.stage[tgt][hour]);
    t.reported.push_back(f.reported[tgt][hour]);
    t.measured.push_back(f.measurement_near(tgt, f.time(hour)).value_or(kNaN));
  }
  t.base_stage.assign(n, kNaN);
  t.extrapolated.assign(n, 0);

  std::vector<std::size_t> origins, rows;
  for (const auto& w : hd.windows) {
    origins.push_back(w.origin);
    rows.push_back(w.target_hour - first);
  }
  auto to_q = [&](const std::vector<double>& stage, std::vector<char>* flags) {
    std::vector<double> q(n, kNaN);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      bool ex = false;
      q[rows[k]] = stage_to_discharge(curve, stage[k], t.time[rows[k]], &ex);
      if (flags) (*flags)[rows[k]] = ex;
    }
    return q;
  };
  auto add = [&](const std::string& name, std::vector<double> v) {
    t.names.push_back(name);
    t.values.push_back(std::move(v));
  };

  std::vector<double> base = predict(m.base, tr, hd.data, origins);
  for (std::size_t k = 0; k < rows.size(); ++k) t.base_stage[rows[k]] = base[k];
  add("base", to_q(base, &t.extrapolated));

  Matrix flat;
  for (const auto& b : m.baselines) {
    if (b == "persistence") {
      std::vector<double> q(n, kNaN);
      for (std::size_t k = 0; k < rows.size(); ++k) q[rows[k]] = f.reported[tgt][origins[k]];
      add(b, std::move(q));
    } else if (b == "linear" || b == "gbt") {
      if (flat.size() == 0) flat = flatten_windows(hd.data, origins, hd.window);
      std::vector<double> s = b == "linear" ? m.linear.value().predict(flat)
                                            : m.gbt.value().predict(flat);
      add(b, to_q(s, nullptr));
    } else {
      BaseModel& model = m.neural.at(b);
      std::vector<double> p = predict(model, tr, hd.data, origins);
      if (model.config.target == TargetKind::discharge) {
        std::vector<double> q(n, kNaN);
        for (std::size_t k = 0; k < rows.size(); ++k) q[rows[k]] = p[k];
        add(b, std::move(q));
      } else {
        add(b, to_q(p, nullptr));
      }
    }
  }
  return t;
}

ResidualSeries residual_series(const ForecastTable& t) {
  ResidualSeries s;
  s.times = t.time;
  s.forecast = t.column("base");
  s.reported = t.reported;
  s.measured = t.measured;
  s.stage_forecast = t.base_stage;
  s.stage_delta = stage_deltas(t.base_stage);
  for (auto sp : t.split) s.fit_mask.push_back(sp != SplitName::test);
  s.curve_extrapolated = t.extrapolated;
  return s;
}

PipelineResult apply_residual(ForecastTable& t, const ResidualConfig& config) {
  PipelineResult r = run_pipeline(residual_series(t), t.horizon, config);
  t.ar = r.ar;
  t.stage1 = r.stage1;
  t.stage2 = r.stage2;
  t.stage3 = r.stage3;
  t.filter_pass = r.filter_pass;
  t.clamped = r.clamped;
  return r;
}

void write_forecast_csv(const ForecastTable& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "timestamp,split,stage_obs,reported,measured,base_stage,extrapolated";
  for (const auto& n : t.names) out << ',' << n;
  out << ",ar,stage1,stage2,stage3,filter,clamped\n";
  auto at = [](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : kNaN; };
  auto flag = [](const std::vector<char>& v, std::size_t i) { return i < v.size() && v[i] ? 1 : 0; };
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << format_iso8601(t.time[i]) << ',' << to_string(t.split[i]) << ',' << fmt(t.stage_obs[i])
        << ',' << fmt(t.reported[i]) << ',' << fmt(t.measured[i]) << ',' << fmt(t.base_stage[i])
        << ',' << flag(t.extrapolated, i);
    for (const auto& v : t.values) out << ',' << fmt(v[i]);
    out << ',' << fmt(at(t.ar, i)) << ',' << fmt(at(t.stage1, i)) << ',' << fmt(at(t.stage2, i))
        << ',' << fmt(at(t.stage3, i)) << ',' << flag(t.filter_pass, i) << ','
        << flag(t.clamped, i) << '\n';
  }
}

ForecastTable read_forecast_csv(const std::filesystem::path& path, int horizon) {
  std::ifstream in(path);
  const std::string src = path.string();
  if (!in) throw ConfigError("cannot open forecast table " + src);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const std::size_t fixed = 7, tail = 6;
  if (header.size() < fixed + 1 + tail || header[0] != "timestamp" || header[fixed] != "base")
    throw ParseError(src, 1, "unexpected forecast table header");
  ForecastTable t;
  t.horizon = horizon;
  t.names.assign(header.begin() + fixed, header.end() - tail);
  t.values.resize(t.names.size());
  auto num = [&](const std::string& s, std::size_t ln) {
    if (s.empty()) return kNaN;
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ParseError(src, ln, "bad number '" + s + "'");
    }
  };
  std::size_t ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::size_t pos = 0;
    while (true) {
      auto comma = line.find(',', pos);
      c.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (c.size() != header.size()) throw ParseError(src, ln, "wrong number of fields");
    t.time.push_back(parse_iso8601(c[0]));
    t.split.push_back(parse_split(c[1]));
    t.stage_obs.push_back(num(c[2], ln));
    t.reported.push_back(num(c[3], ln));
    t.measured.push_back(num(c[4], ln));
    t.base_stage.push_back(num(c[5], ln));
    t.extrapolated.push_back(c[6] == "1");
    for (std::size_t k = 0; k < t.names.size(); ++k) t.values[k].push_back(num(c[fixed + k], ln));
    const std::size_t r = header.size() - tail;
    t.ar.push_back(num(c[r], ln));
    t.stage1.push_back(num(c[r + 1], ln));
    t.stage2.push_back(num(c[r + 2], ln));
    t.stage3.push_back(num(c[r + 3], ln));
    t.filter_pass.push_back(c[r + 4] == "1");
    t.clamped.push_back(c[r + 5] == "1");
  }
  return t;
}

nlohmann::json evaluate_table(const ForecastTable& t, double action_stage) {
  nlohmann::json out{{"horizon", t.horizon}, {"action_stage_ft", action_stage}};
  nlohmann::json splits = nlohmann::json::object();
  for (SplitName sp : {SplitName::train, SplitName::val, SplitName::test}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.split[i] == sp) rows.push_back(i);
    nlohmann::json sj{{"rows", rows.size()}};
    if (rows.empty()) {
      splits[to_string(sp)] = sj;
      continue;
    }
    auto sub = [&](const std::vector<double>& v) {
      std::vector<double> o;
      for (std::size_t i : rows) o.push_back(i < v.size() ? v[i] : kNaN);
      return o;
    };
    const auto stage = sub(t.stage_obs);
    const auto events = extract_flood_events(stage, action_stage);
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : events)
      ev.push_back({{"start", format_iso8601(t.time[rows[e.start]])},
                    {"end", format_iso8601(t.time[rows[e.end]])}});
    sj["events"] = ev;

    const auto reported = sub(t.reported);
    auto reported_space = [&](const std::vector<double>& fc) -> nlohmann::json {
      std::vector<double> o, p;
      for (std::size_t i = 0; i < fc.size(); ++i)
        if (std::isfinite(fc[i]) && std::isfinite(reported[i])) {
          o.push_back(reported[i]);
          p.push_back(fc[i]);
        }
      if (o.empty()) return nullptr;
      MetricsReport rep;
      rep.scalar = compute_scalar_metrics(o, p);
      if (o.size() == fc.size()) {
        rep = evaluate_series(reported, fc, events);
      } else {
        for (const auto& e : events) {
          bool ok = true;
          for (std::size_t i = e.start; i <= e.end; ++i)
            ok = ok && std::isfinite(fc[i]) && std::isfinite(reported[i]);
          if (ok) {
            rep.events.push_back(e);
            rep.per_event.push_back(peak_metrics(reported, fc, e));
          }
        }
        if (!rep.per_event.empty()) {
          PeakMetrics agg;
          for (const auto& pm : rep.per_event) {
            agg.peak_bias += pm.peak_bias;
            agg.peak_pct_bias += pm.peak_pct_bias;
            agg.peak_time_bias += pm.peak_time_bias;
          }
          const double k = static_cast<double>(rep.per_event.size());
          agg.peak_bias /= k;
          agg.peak_pct_bias /= k;
          agg.peak_time_bias /= k;
          rep.peak_aggregate = agg;
        }
      }
      return to_json(rep);
    };
    nlohmann::json rs = nlohmann::json::object();
    for (std::size_t k = 0; k < t.names.size(); ++k) rs[t.names[k]] = reported_space(sub(t.values[k]));
    if (!t.ar.empty()) rs["ar"] = reported_space(sub(t.ar));
    sj["reported_space"] = rs;

    const auto measured = sub(t.measured);
    const auto filter = [&] {
      std::vector<char> o;
      for (std::size_t i : rows) o.push_back(i < t.filter_pass.size() && t.filter_pass[i]);
      return o;
    }();
    auto measured_space = [&](const std::vector<double>& fc, bool flood_only) -> nlohmann::json {
      std::vector<double> o, p;
      for (std::size_t i = 0; i < fc.size(); ++i)
        if (std::isfinite(fc[i]) && std::isfinite(measured[i]) && (!flood_only || filter[i])) {
          o.push_back(measured[i]);
          p.push_back(fc[i]);
        }
      if (o.empty()) return nullptr;
      return to_json(compute_scalar_metrics(o, p));
    };
    std::vector<std::pair<std::string, std::vector<double>>> series{
        {"reported", reported}, {"base", sub(t.column("base"))}};
    if (!t.ar.empty()) {
      series.emplace_back("ar", sub(t.ar));
      series.emplace_back("stage1", sub(t.stage1));
      series.emplace_back("stage2", sub(t.stage2));
      series.emplace_back("stage3", sub(t.stage3));
    }
    nlohmann::json ms = nlohmann::json::object(), fs = nlohmann::json::object();
    for (const auto& [name, v] : series) {
      ms[name] = measured_space(v, false);
      fs[name] = measured_space(v, true);
    }
    sj["measured_space"] = ms;
    sj["flood_filtered"] = fs;
    splits[to_string(sp)] = sj;
  }
  out["splits"] = splits;
  return out;
}

}  // namespace rivercast
