#pragma once

#include "millforge/ego.hpp"
#include "millforge/env.hpp"
#include "millforge/param_fit.hpp"
#include "millforge/policy.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace millforge {

struct StressSpec {
  double k_low = 100.0;
  double k_high = 2000.0;
};

struct CompareSpec {
  int n_trials = 20;
  std::uint64_t first_seed = 1000;
};

struct EgoRunSpec {
  EgoConfig optimizer;
  std::uint64_t episode_seed = 0;
  double safety_penalty = -10.0;
};

/// One scenario document: environment, workpiece, controller, reward and the
/// per-command settings.
struct ScenarioConfig {
  EnvConfig env;
  std::uint64_t seed = 0;
  ProcessParams baseline;
  StressSpec stress;
  CemConfig cem;
  EgoRunSpec ego;
  CompareSpec compare;
  FitOptions fit;
};

/// Parses a scenario from JSON text. Every key must be known; physical values
/// carry their unit in the key name. Throws ConfigError with the offending
/// path.
ScenarioConfig parse_scenario(const nlohmann::json& doc);

/// Loads a file, resolving "include" lists (paths relative to the including
/// file, merged in order, the including document last).
nlohmann::json load_json_with_includes(const std::filesystem::path& file);
ScenarioConfig load_scenario(const std::filesystem::path& file);

/// Full resolved scenario; parse_scenario(scenario_to_json(c)) reproduces c.
nlohmann::json scenario_to_json(const ScenarioConfig& c);

}  // namespace millforge
