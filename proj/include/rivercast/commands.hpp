#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "rivercast/config.hpp"

namespace rivercast {

inline constexpr const char* kVersion = "0.1.0";

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
  std::optional<int> horizon;  // restricts the configured horizons
};

/// Loads the config file (or defaults) and applies the seed and horizon
/// overrides. Throws ConfigError.
ExperimentConfig resolve_config(const CommandOptions& options);

/// Each command writes its artifacts plus manifest_<command>.json into `out`.
void cmd_synth(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_train(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_forecast(const ExperimentConfig& config, const std::filesystem::path& out);
void cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& out);

/// Runs one subcommand by name. Returns 0 on success, 2 for configuration
/// errors and 1 for any other failure.
int run_command(const std::string& name, const CommandOptions& options);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Hex digest of the canonical config document and effective seed.
std::string config_hash(const ExperimentConfig& config);

}  // namespace rivercast
