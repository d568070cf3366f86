#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "crt/trialsim.hpp"

namespace crt {

nlohmann::json to_json(const ScenarioConfig& config);
/// Missing keys keep the defaults of ScenarioConfig; unknown keys are errors.
ScenarioConfig scenario_from_json(const nlohmann::json& j);

/// A preset name or a path to a JSON scenario file.
ScenarioConfig load_scenario(const std::string& preset_or_path);

}  // namespace crt
