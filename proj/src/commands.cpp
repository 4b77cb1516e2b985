#include "rivercast/commands.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rivercast/errors.hpp"
#include "rivercast/experiment.hpp"

namespace rivercast {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw Error("sha256: digest initialisation failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", md[i]);
      out += buf;
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

/// Provenance record written next to a command's outputs.
class Manifest {
 public:
  Manifest(std::string command, const ExperimentConfig& config)
      : command_(std::move(command)), started_(Clock::now()) {
    doc_ = {{"command", command_},
            {"version", kVersion},
            {"modules",
             {{"graph", kVersion}, {"numerics", kVersion}, {"model", kVersion},
              {"rating_curve", kVersion}, {"residual", kVersion}, {"metrics", kVersion},
              {"synth", kVersion}, {"ingest", kVersion}, {"cli", kVersion}}},
            {"config_hash", config_hash(config)},
            {"seed", config.seed},
            {"started_at", format_iso8601(std::chrono::floor<std::chrono::seconds>(
                               std::chrono::system_clock::now()))},
            {"inputs", json::array()},
            {"outputs", json::array()},
            {"timings_s", json::object()}};
  }

  std::string name() const { return "manifest_" + command_ + ".json"; }

  void input(const fs::path& p) {
    doc_["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  void output(const fs::path& p) {
    doc_["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  void timing(const std::string& label, double seconds) { doc_["timings_s"][label] = seconds; }

  fs::path write(const fs::path& dir) {
    doc_["timings_s"]["total"] = seconds_since(started_);
    const fs::path path = dir / name();
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
    spdlog::info("wrote {}", path.string());
    return path;
  }

 private:
  std::string command_;
  Clock::time_point started_;
  json doc_;
};

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string num(const json& v) {
  if (!v.is_number()) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
  return buf;
}

fs::path models_dir(const fs::path& out) { return out / "models"; }

std::string horizon_file(const char* stem, int h, const char* ext) {
  return std::string(stem) + "_h" + std::to_string(h) + ext;
}

// Inputs that load_dataset resolves for this config.
std::vector<fs::path> dataset_inputs(const ExperimentConfig& c, const fs::path& out) {
  std::vector<fs::path> p = c.data_csv;
  if (p.empty()) p.push_back(out / "data.csv");
  p.push_back(c.graph_path.empty() ? out / "graph.json" : c.graph_path);
  p.push_back(c.rating_curve_path.empty() ? out / "rating_curves.json" : c.rating_curve_path);
  for (const auto& f : p)
    if (!fs::exists(f)) throw ConfigError("input file " + f.string() + " does not exist");
  return p;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string config_hash(const ExperimentConfig& c) {
  json key{{"config", c.raw.is_null() ? json::object() : c.raw},
           {"seed", c.seed},
           {"horizons", c.horizons}};
  return sha256_hex(key.dump());
}

ExperimentConfig resolve_config(const CommandOptions& o) {
  ExperimentConfig c;
  if (o.config) {
    c = load_config(*o.config);
  } else {
    c = config_from_json(json::object());
  }
  if (o.seed) override_seed(c, *o.seed);
  if (o.horizon) {
    if (*o.horizon < 1 || *o.horizon > 6) throw ConfigError("--horizon must lie in 1..6");
    c.horizons = {*o.horizon};
  }
  return c;
}

void cmd_synth(const ExperimentConfig& c, const fs::path& out) {
  Manifest m("synth", c);
  if (c.raw.is_object() && !c.data_csv.empty())
    spdlog::warn("config names input data; synth writes its own files into {}", out.string());
  auto t = Clock::now();
  SynthResult r = generate(c.synth);
  m.timing("generate", seconds_since(t));
  for (const auto& line : r.log) spdlog::info("synth: {}", line);
  spdlog::info("synth: {} hours, {} stations, {} flood events at the target", r.frame.hours(),
               r.frame.stations.size(), r.events.size());
  for (const auto& p : write_synth_outputs(r, out)) m.output(p);
  m.write(out);
}

void cmd_train(const ExperimentConfig& c, const fs::path& out) {
  Manifest m("train", c);
  for (const auto& p : dataset_inputs(c, out)) m.input(p);
  auto t = Clock::now();
  Dataset d = load_dataset(c, out);
  m.timing("load", seconds_since(t));
  for (int h : c.horizons) {
    t = Clock::now();
    HorizonData hd = prepare_horizon(d, c.window, h, c.split);
    ModelSet models = train_models(d, hd, c);
    for (const auto& [name, res] : models.training) {
      const auto& rec = res.records.at(res.selected);
      spdlog::info("train h={} {}: grid point {} of {}, {} epochs, best val loss {:.6g}", h, name,
                   res.selected + 1, res.records.size(), rec.epochs_run, rec.best_val_loss);
    }
    for (const auto& p : save_models(models, models_dir(out))) m.output(p);
    m.timing("horizon_" + std::to_string(h), seconds_since(t));
  }
  m.write(out);
}

void cmd_forecast(const ExperimentConfig& c, const fs::path& out) {
  Manifest m("forecast", c);
  for (const auto& p : dataset_inputs(c, out)) m.input(p);
  Dataset d = load_dataset(c, out);
  const TransitionSet tr = build_transitions(d.graph, c.diffusion_steps);
  for (int h : c.horizons) {
    auto t = Clock::now();
    HorizonData hd = prepare_horizon(d, c.window, h, c.split);
    ModelSet models = load_models(models_dir(out), h, c.baselines);
    for (const auto& entry : fs::directory_iterator(models_dir(out))) {
      const auto name = entry.path().filename().string();
      if (name.ends_with(horizon_file("", h, ".json"))) m.input(entry.path());
    }
    ForecastTable table = make_forecasts(d, hd, models, tr);
    PipelineResult pr = apply_residual(table, c.residual);
    const auto& s1 = pr.state.stage1;
    spdlog::info("forecast h={}: {} rows, ar rho {:.4g}, stage1 rho {:.4g} c1 {:.3f}, c2 {:.3f}", h,
                 table.size(), pr.state.ar.rho, s1.rho, s1.confidence, pr.state.stage2.confidence);
    if (!s1.warning.empty()) spdlog::warn("forecast h={}: stage 1: {}", h, s1.warning);
    std::size_t clamps = 0;
    for (char v : pr.clamped) clamps += v ? 1 : 0;
    if (clamps > 0) spdlog::warn("forecast h={}: {} corrections clamped", h, clamps);

    const fs::path fc = out / horizon_file("forecasts", h, ".csv");
    write_forecast_csv(table, fc);
    const fs::path audit = out / horizon_file("audit", h, ".csv");
    write_audit_csv(residual_series(table), pr, audit);
    const fs::path state = out / horizon_file("residual_state", h, ".json");
    json sj = to_json(pr.state);
    sj["horizon"] = h;
    sj["manifest"] = m.name();
    write_json_file(state, sj);
    for (const auto& p : {fc, audit, state}) m.output(p);
    m.timing("horizon_" + std::to_string(h), seconds_since(t));
  }
  m.write(out);
}

void cmd_evaluate(const ExperimentConfig& c, const fs::path& out) {
  Manifest m("evaluate", c);
  json metrics{{"manifest", m.name()},
               {"config_hash", config_hash(c)},
               {"seed", c.seed},
               {"action_stage_ft", c.residual.action_stage},
               {"horizons", json::object()}};
  std::ostringstream cmp;
  cmp << "horizon,split,space,model,n_points,mae,mape,rmse,bias,nse,cc,peak_bias,peak_pct_bias,"
         "peak_time_bias_h,n_flood_events\n";
  for (int h : c.horizons) {
    const fs::path fc = out / horizon_file("forecasts", h, ".csv");
    if (!fs::exists(fc)) throw ConfigError("missing " + fc.string() + "; run forecast first");
    m.input(fc);
    ForecastTable table = read_forecast_csv(fc, h);
    json ev = evaluate_table(table, c.residual.action_stage);
    for (const auto& [split, sj] : ev.at("splits").items()) {
      for (const char* space : {"reported_space", "measured_space", "flood_filtered"}) {
        if (!sj.contains(space)) continue;
        for (const auto& [model, r] : sj.at(space).items()) {
          if (r.is_null()) continue;
          const json peak = r.contains("peak") ? r.at("peak") : json(nullptr);
          auto pk = [&](const char* k) { return peak.is_object() ? num(peak.at(k)) : ""; };
          cmp << h << ',' << split << ',' << space << ',' << model << ','
              << r.at("n_points").get<std::size_t>() << ',' << num(r.at("mae")) << ','
              << num(r.at("mape")) << ',' << num(r.at("rmse")) << ',' << num(r.at("bias")) << ','
              << num(r.at("nse")) << ',' << num(r.at("cc")) << ',' << pk("peak_bias") << ','
              << pk("peak_pct_bias") << ',' << pk("peak_time_bias_h") << ','
              << (r.contains("n_flood_events") ? std::to_string(r.at("n_flood_events").get<int>())
                                                : "")
              << '\n';
        }
      }
    }
    metrics["horizons"][std::to_string(h)] = std::move(ev);
    spdlog::info("evaluate h={}: done", h);
  }
  const fs::path mpath = out / "metrics.json";
  write_json_file(mpath, metrics);
  const fs::path cpath = out / "comparison.csv";
  std::ofstream(cpath) << cmp.str();
  m.output(mpath);
  m.output(cpath);
  m.write(out);
}

int run_command(const std::string& name, const CommandOptions& o) {
  try {
    ExperimentConfig c = resolve_config(o);
    fs::create_directories(o.out);
    if (name == "synth") {
      cmd_synth(c, o.out);
    } else if (name == "train") {
      cmd_train(c, o.out);
    } else if (name == "forecast") {
      cmd_forecast(c, o.out);
    } else if (name == "evaluate") {
      cmd_evaluate(c, o.out);
    } else {
      throw ConfigError("unknown command '" + name + "'");
    }
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace rivercast
