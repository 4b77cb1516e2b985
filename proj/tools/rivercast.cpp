#include <CLI11.hpp>
#include <cstdlib>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rivercast/commands.hpp"

int main(int argc, char** argv) {
  // Log level from RIVERCAST_LOG_LEVEL (trace, debug, info, warn, error, off).
  spdlog::set_default_logger(spdlog::stderr_color_mt("rivercast"));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  if (const char* lvl = std::getenv("RIVERCAST_LOG_LEVEL"))
    spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"River stage and streamflow forecasting with residual error correction"};
  app.set_version_flag("--version", std::string(rivercast::kVersion));
  app.require_subcommand(1);

  rivercast::CommandOptions opt;
  std::string config;
  std::uint64_t seed = 0;
  int horizon = 0;
  std::string out = "out";
  for (const auto& [name, help] :
       {std::pair{"synth", "Generate a synthetic watershed dataset"},
        std::pair{"train", "Train the base model and baselines for each horizon"},
        std::pair{"forecast", "Produce forecasts and run the residual correction"},
        std::pair{"evaluate", "Score forecasts and write metrics.json and comparison.csv"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Root seed overriding the config");
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--horizon", horizon, "Run a single horizon")->check(CLI::Range(1, 6));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  auto* sub = app.get_subcommands().front();
  if (!config.empty()) opt.config = config;
  if (sub->count("--seed") > 0) opt.seed = seed;
  if (sub->count("--horizon") > 0) opt.horizon = horizon;
  opt.out = out;
  return rivercast::run_command(sub->get_name(), opt);
}
