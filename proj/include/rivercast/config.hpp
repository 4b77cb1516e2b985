#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rivercast/boosting.hpp"
#include "rivercast/residual.hpp"
#include "rivercast/synth.hpp"
#include "rivercast/training.hpp"

namespace rivercast {

/// Everything a run needs. Relative input paths resolve against the config
/// file's directory; absent inputs default to the files `synth` writes into
/// the output directory.
struct ExperimentConfig {
  std::filesystem::path base_dir = ".";
  std::vector<std::filesystem::path> data_csv;
  std::filesystem::path graph_path;
  std::filesystem::path rating_curve_path;
  std::string rainfall_id = "watershed";

  int window = 24;
  std::vector<int> horizons{1, 2, 3, 4, 5, 6};
  std::array<double, 3> split{60.0, 15.0, 25.0};
  std::uint64_t seed = 0;

  int diffusion_steps = 2;
  std::vector<GridPoint> grid = default_grid();
  int max_epochs = 100;
  int patience = 10;
  double clip_norm = 5.0;

  std::vector<std::string> baselines{"persistence", "linear", "mlp", "gbt", "plain_gru",
                                     "dcrnn_direct"};
  BoostParams gbt_params{100, 4, 0.1, 2};

  ResidualConfig residual;
  bool action_stage_set = false;

  SynthScenario synth = SynthScenario::default_scenario();
  nlohmann::json raw;  // the document as read, for hashing and the manifest
};

/// Throws ConfigError for unreadable files, unknown keys in known sections,
/// and out-of-range values.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = ".");

/// Fills defaults that depend on other sections: the action stage falls back
/// to the synthetic scenario's action level.
void finalize(ExperimentConfig& config);

/// Applies a command-line seed override to every seeded component.
void override_seed(ExperimentConfig& config, std::uint64_t seed);

bool is_known_baseline(const std::string& name);

}  // namespace rivercast
