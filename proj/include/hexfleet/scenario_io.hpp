#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "hexfleet/city.hpp"

namespace hexfleet {

inline constexpr int kScenarioFormatVersion = 1;

nlohmann::json scenario_to_json(const Scenario& scenario);
// Throws DataError on schema or validation failure.
Scenario scenario_from_json(const nlohmann::json& doc);

void save_scenario(const Scenario& scenario, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace hexfleet
