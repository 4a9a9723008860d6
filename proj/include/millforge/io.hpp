#pragma once

#include "millforge/ego.hpp"
#include "millforge/env.hpp"
#include "millforge/heightfield.hpp"
#include "millforge/param_fit.hpp"
#include "millforge/policy.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace millforge {

// Policies as JSON: {"type", "low", "high", ...params, "normalizer"}.
nlohmann::json policy_to_json(const Policy& policy);
/// constant_params needs the environment for its layout and regulators.
std::unique_ptr<Policy> policy_from_json(const nlohmann::json& j, const EnvConfig& env);
void save_policy(const std::filesystem::path& file, const Policy& policy);
std::unique_ptr<Policy> load_policy(const std::filesystem::path& file, const EnvConfig& env);

nlohmann::json normalizer_to_json(const RunningNormalizer& n);
RunningNormalizer normalizer_from_json(const nlohmann::json& j);

// CSV outputs. All throw Error when the file cannot be written.
void write_learning_curve(const std::filesystem::path& file,
                          const std::vector<CemGeneration>& curve);
void write_trajectory(const std::filesystem::path& file, const std::vector<LogRecord>& log);
void write_ego_history(const std::filesystem::path& file, const std::vector<EgoSample>& history);
void write_partial_dependence(const std::filesystem::path& file,
                              const std::vector<PartialDependence>& pd);

/// Heightfield as JSON: grid spec plus row-major heights (x fastest).
nlohmann::json heightfield_to_json(const Heightfield& h);
Heightfield heightfield_from_json(const nlohmann::json& j);

// Force logs: CSV (t_s, vx/vy/vz mm/s, fx/fy/fz N, engaged) and a JSON
// sidecar "<file>.meta.json" with the tool and immersion.
void write_force_log(const std::filesystem::path& csv, const ForceLog& log);
ForceLog read_force_log(const std::filesystem::path& csv);
nlohmann::json meta_to_json(const ExperimentMeta& m);
ExperimentMeta meta_from_json(const nlohmann::json& j);
std::filesystem::path meta_path_for(const std::filesystem::path& csv);

nlohmann::json fit_report(const FitResult& r);

nlohmann::json material_to_json(const MaterialParams& m);
nlohmann::json tool_to_json(const ToolSpec& t);
ToolSpec tool_from_json(const nlohmann::json& j);

}  // namespace millforge
