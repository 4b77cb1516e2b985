#include "rivercast/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "rivercast/errors.hpp"

namespace rivercast {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + section);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ConfidenceReference parse_reference(const std::string& s) {
  if (s == "reported") return ConfidenceReference::reported;
  if (s == "measured") return ConfidenceReference::measured;
  throw ConfigError("confidence_reference must be 'reported' or 'measured'");
}

}  // namespace

bool is_known_baseline(const std::string& name) {
  static const std::set<std::string> known{"persistence", "linear",    "mlp",
                                           "gbt",         "plain_gru", "dcrnn_direct"};
  return known.count(name) > 0;
}

ExperimentConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.raw = doc;
  try {
    check_keys(doc, "config",
               {"data", "window", "horizons", "split", "seed", "model", "baselines", "gbt",
                "residual", "synth"});
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      check_keys(d, "data", {"csv", "graph", "rating_curves", "rainfall_id"});
      if (d.contains("csv")) {
        if (d.at("csv").is_string()) {
          c.data_csv.push_back(base_dir / d.at("csv").get<std::string>());
        } else {
          for (const auto& p : d.at("csv")) c.data_csv.push_back(base_dir / p.get<std::string>());
        }
      }
      if (d.contains("graph")) c.graph_path = base_dir / d.at("graph").get<std::string>();
      if (d.contains("rating_curves"))
        c.rating_curve_path = base_dir / d.at("rating_curves").get<std::string>();
      read(d, "rainfall_id", c.rainfall_id);
    }
    read(doc, "window", c.window);
    read(doc, "horizons", c.horizons);
    if (doc.contains("split")) {
      auto v = doc.at("split").get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("split needs three percentages");
      std::copy(v.begin(), v.end(), c.split.begin());
    }
    read(doc, "seed", c.seed);
    if (doc.contains("model")) {
      const auto& m = doc.at("model");
      check_keys(m, "model",
                 {"diffusion_steps", "grid", "max_epochs", "patience", "clip_norm"});
      read(m, "diffusion_steps", c.diffusion_steps);
      read(m, "max_epochs", c.max_epochs);
      read(m, "patience", c.patience);
      read(m, "clip_norm", c.clip_norm);
      if (m.contains("grid") && !(m.at("grid").is_string() && m.at("grid") == "default")) {
        c.grid.clear();
        for (const auto& g : m.at("grid")) {
          check_keys(g, "grid point", {"batch_size", "learning_rate", "hidden", "decoder_layers"});
          GridPoint p;
          read(g, "batch_size", p.batch_size);
          read(g, "learning_rate", p.learning_rate);
          read(g, "hidden", p.hidden);
          read(g, "decoder_layers", p.decoder_layers);
          c.grid.push_back(p);
        }
      }
    }
    read(doc, "baselines", c.baselines);
    if (doc.contains("gbt")) {
      const auto& g = doc.at("gbt");
      check_keys(g, "gbt", {"n_trees", "max_depth", "learning_rate", "min_samples_leaf"});
      read(g, "n_trees", c.gbt_params.n_trees);
      read(g, "max_depth", c.gbt_params.max_depth);
      read(g, "learning_rate", c.gbt_params.learning_rate);
      read(g, "min_samples_leaf", c.gbt_params.min_samples_leaf);
    }
    if (doc.contains("residual")) {
      const auto& r = doc.at("residual");
      check_keys(r, "residual",
                 {"ar", "stage1", "stage2", "stage3", "action_stage", "lowess_fraction", "lowess_iterations",
                  "bootstrap_replicates", "n_trees", "max_depth", "learning_rate",
                  "min_samples_leaf", "clamp_floor", "confidence_reference"});
      auto& rc = c.residual;
      read(r, "ar", rc.ar_enabled);
      read(r, "stage1", rc.stage1_enabled);
      read(r, "stage2", rc.stage2_enabled);
      read(r, "stage3", rc.stage3_enabled);
      if (r.contains("action_stage")) {
        rc.action_stage = r.at("action_stage").get<double>();
        c.action_stage_set = true;
      }
      read(r, "lowess_fraction", rc.lowess_fraction);
      read(r, "lowess_iterations", rc.lowess_iterations);
      read(r, "bootstrap_replicates", rc.bootstrap_replicates);
      read(r, "n_trees", rc.boost.n_trees);
      read(r, "max_depth", rc.boost.max_depth);
      read(r, "learning_rate", rc.boost.learning_rate);
      read(r, "min_samples_leaf", rc.boost.min_samples_leaf);
      read(r, "clamp_floor", rc.clamp_floor);
      if (r.contains("confidence_reference"))
        rc.confidence_reference = parse_reference(r.at("confidence_reference").get<std::string>());
    }
    if (doc.contains("synth")) c.synth = scenario_from_json(doc.at("synth"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (!doc.contains("synth") || !doc.at("synth").contains("seed")) c.synth.seed = c.seed;
  c.residual.seed = c.seed;

  if (c.window < 1) throw ConfigError("window must be positive");
  if (c.horizons.empty()) throw ConfigError("no horizons configured");
  for (int h : c.horizons)
    if (h < 1 || h > 6) throw ConfigError("horizons must lie in 1..6");
  double total = c.split[0] + c.split[1] + c.split[2];
  if (std::abs(total - 100.0) > 1e-9 || *std::min_element(c.split.begin(), c.split.end()) < 0.0)
    throw ConfigError("split percentages must be non-negative and sum to 100");
  if (c.diffusion_steps < 1) throw ConfigError("diffusion_steps must be at least 1");
  if (c.grid.empty()) throw ConfigError("hyperparameter grid is empty");
  for (const auto& g : c.grid)
    if (g.batch_size < 1 || !(g.learning_rate > 0.0) || g.hidden < 1 || g.decoder_layers < 0)
      throw ConfigError("invalid grid point");
  if (c.max_epochs < 0 || c.patience < 1) throw ConfigError("invalid epoch settings");
  for (const auto& b : c.baselines)
    if (!is_known_baseline(b)) throw ConfigError("unknown baseline '" + b + "'");
  if (!(c.residual.lowess_fraction > 0.0 && c.residual.lowess_fraction <= 1.0))
    throw ConfigError("lowess_fraction must lie in (0, 1]");
  if (c.residual.lowess_iterations < 0) throw ConfigError("lowess_iterations must be >= 0");
  if (c.residual.bootstrap_replicates < 1) throw ConfigError("bootstrap_replicates must be >= 1");
  try {
    c.synth.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid synth section: ") + e.what());
  }
  finalize(c);
  return c;
}

void finalize(ExperimentConfig& c) {
  if (!c.action_stage_set) c.residual.action_stage = c.synth.action_level_ft;
}

void override_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.synth.seed = seed;
  c.residual.seed = seed;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc, path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace rivercast
