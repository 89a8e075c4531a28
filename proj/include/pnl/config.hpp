#pragma once

#include "pnl/synthdata.hpp"
#include "pnl/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pnl {

/// Every tunable of generation and training under one flat key space.
struct RunConfig {
  GenConfig gen;
  TrainerConfig train;
  std::string dataset;
  std::string out;

  /// Throws ConfigError.
  void validate_training() const;
  void validate_generation() const;
};

/// Documented key names, in schema order.
std::vector<std::string> config_keys();
/// One-line description of a key's meaning.
std::string_view config_key_help(std::string_view key);

/// Parses `value` as the key's type. Unknown key or bad value: ConfigError.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
/// Applies a flat JSON object; unknown keys or wrong types: ConfigError.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Writes config.json (the fully resolved configuration) into `dir`.
void write_resolved_config(const std::filesystem::path& dir, const RunConfig& cfg);

/// `names` each one of pns, psm, pnmxp, pvrmxp or all.
void apply_ablation(AblationFlags& flags, const std::vector<std::string>& names);

}  // namespace pnl
