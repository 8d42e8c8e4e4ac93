#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vvl/sim_harness.hpp"

namespace vvl {

// JSON settings with optional "scenario", "rho" and "lower" objects, applied on top of `base`.
// Absent keys keep the base value; unknown keys and wrong types are ValidationError with the key path.
// Voltage limits are squared per-unit; "eta": null selects each inverter's own reserve factor.
ScenarioConfig parse_scenario_config(std::string_view text, const std::string& source = "<text>",
                                     ScenarioConfig base = {});
ScenarioConfig load_scenario_config(const std::filesystem::path& path, ScenarioConfig base = {});
std::string write_scenario_config(const ScenarioConfig& cfg);

}  // namespace vvl
