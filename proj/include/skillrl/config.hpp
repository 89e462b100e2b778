#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "skillrl/trainer.hpp"

namespace skillrl {

/// Experiment settings shared by the CLI commands. Every field has a
/// working default; JSON files may override any subset but unknown keys are
/// rejected (typos must not silently fall back to defaults).
struct RunConfig {
  std::uint64_t seed = 1;
  PpoConfig ppo;
  double success_threshold = 0.90;
  double margin_fraction = 0.10;  // rejection margin, fraction of budget
  int max_random_retries = 2;
  int horizon = 100;
  int eval_episodes = 41;

  void validate() const;  // throws std::invalid_argument
};

/// Strict decode: unknown keys anywhere raise std::invalid_argument naming
/// the offending dotted path; values are range-checked.
RunConfig config_from_json(const nlohmann::json& j);

/// Reads and decodes a JSON config file. Syntax errors surface with the
/// file name plus nlohmann's line/column diagnostic.
RunConfig load_config(const std::string& path);

}  // namespace skillrl
