#pragma once

#include <stdexcept>
#include <string>

#include "relnav/scenario.hpp"

// Sectioned key/value configuration files:
//
//   # comment
//   [scenario]
//   kind = static_square
//   duration = 120
//   relative_setpoint = 0,-1.5,0.9
//
// Sections: [scenario] [rates] [uwb] [sim_noise] [filter] [controller].
// Unknown sections or keys are errors; keys mirror the config struct
// fields. Kind-specific defaults apply first, explicit keys override.

namespace relnav {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ScenarioConfig parse_scenario_config_text(const std::string& text);

/// Throws ConfigError for unreadable files or invalid content.
ScenarioConfig parse_scenario_config(const std::string& path);

/// Serialization of every key (documentation and golden-config tool).
std::string scenario_config_to_text(const ScenarioConfig& config);

}  // namespace relnav
