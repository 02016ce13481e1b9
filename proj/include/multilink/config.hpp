#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "multilink/sim.hpp"

namespace multilink {

/// Everything a config file can set. Sections absent from the file keep defaults.
struct ProjectConfig {
  RobotModel robot = default_quad_model();
  PlanWeights plan_weights;
  PlanConstraints plan_constraints;
  LQIWeights lqi = LQIWeights::defaults(4);
  PositionGains position;
  ControllerLimits limits;
  Scenario scenario;
  bool has_scenario = false;

  SimulationSettings settings() const { return {lqi, position, limits, plan_weights, plan_constraints}; }
};

/// Reads a JSON file, follows an optional "base" file (merged underneath), applies
/// `key.path=value` overrides and validates. Throws ConfigError.
ProjectConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

ProjectConfig parse_config(const nlohmann::json& doc);

nlohmann::json read_config_document(const std::string& path);

/// `a.b.c=value`; value is parsed as JSON when possible, otherwise kept as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Number, or a string such as "pi/2", "-pi", "0.5pi".
double parse_angle(const nlohmann::json& v);
VecX parse_vector(const nlohmann::json& v, const std::string& where);

}  // namespace multilink
