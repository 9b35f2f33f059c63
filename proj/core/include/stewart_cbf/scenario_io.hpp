#pragma once

#include <filesystem>
#include <string>

#include "stewart_cbf/simulation.hpp"

namespace stewart_cbf {

// Keys absent from the document keep the value from
// ScenarioConfig::reproduction_scenario(). Unknown keys are rejected. Throws
// ConfigError on malformed input; the result is not validated.
ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

// Every field spelled out, geometry as explicit attachment points.
std::string normalized_json(const ScenarioConfig& config, int indent = 2);

std::string trajectory_csv(const ScenarioLog& log);
std::string summary_json(const ScenarioResult& result, int indent = 2);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace stewart_cbf
