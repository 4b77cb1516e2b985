#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rivercast/config.hpp"
#include "rivercast/errors.hpp"

using namespace rivercast;
using nlohmann::json;

TEST_CASE("defaults") {
  auto c = config_from_json(json::object());
  CHECK(c.window == 24);
  CHECK(c.horizons == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(c.split[0] == 60.0);
  CHECK(c.grid.size() == 16);
  CHECK(c.baselines.size() == 6);
  CHECK(c.residual.action_stage == c.synth.action_level_ft);
}

TEST_CASE("values, relative paths and seed propagation") {
  json doc = json::parse(R"({
    "data": {"csv": ["a.csv", "b.csv"], "graph": "g.json", "rating_curves": "rc.json"},
    "window": 12, "horizons": [1, 6], "split": [70, 10, 20], "seed": 42,
    "model": {"diffusion_steps": 3, "grid": [{"batch_size": 8, "learning_rate": 0.01,
              "hidden": 4, "decoder_layers": 0}], "max_epochs": 3},
    "baselines": ["persistence", "gbt"],
    "residual": {"action_stage": 6.5, "stage3": false, "confidence_reference": "measured"},
    "synth": {"kappa": 0.3}
  })");
  auto c = config_from_json(doc, "/cfg");
  CHECK(c.data_csv.size() == 2);
  CHECK(c.data_csv[1] == std::filesystem::path("/cfg/b.csv"));
  CHECK(c.graph_path == std::filesystem::path("/cfg/g.json"));
  CHECK(c.window == 12);
  CHECK(c.diffusion_steps == 3);
  CHECK(c.grid.size() == 1);
  CHECK(c.grid[0].hidden == 4);
  CHECK(c.seed == 42);
  CHECK(c.synth.seed == 42);
  CHECK(c.residual.seed == 42);
  CHECK(c.residual.action_stage == 6.5);
  CHECK_FALSE(c.residual.stage3_enabled);
  CHECK(c.residual.confidence_reference == ConfidenceReference::measured);
  CHECK(c.synth.kappa == 0.3);

  override_seed(c, 7);
  CHECK(c.synth.seed == 7);
  CHECK(c.residual.seed == 7);
}

TEST_CASE("invalid documents") {
  auto bad = [](const char* text) { return json::parse(text); };
  CHECK_THROWS_AS(config_from_json(bad(R"({"windw": 24})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"residual": {"stage4": true}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"horizons": [0]})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"split": [50, 20, 20]})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"baselines": ["arima"]})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"model": {"grid": []}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"window": "long"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(bad(R"({"synth": {"kappa": -1}})")), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/rivercast.json"), ConfigError);

  auto path = std::filesystem::temp_directory_path() / "rivercast_bad_config.json";
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_config(path), ConfigError);
  std::filesystem::remove(path);
}
