#include "multilink/config.hpp"

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include "multilink/errors.hpp"

namespace multilink {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError("'" + where + "' must be a number");
  return v.get<double>();
}

Vec3 vec3(const json& v, const std::string& where) {
  const VecX x = parse_vector(v, where);
  if (x.size() != 3) throw ConfigError("'" + where + "' must have 3 entries");
  return x;
}

template <class F>
void opt(const json& obj, const char* key, F&& f) {
  if (obj.contains(key)) f(obj.at(key));
}

RobotModel parse_robot(const json& j) {
  check_keys(j, "robot", {"n_links", "link_mass", "total_mass", "link_length", "tilt_beta", "drag_ratio", "drag_ratio_magnitude",
                          "lambda_max", "rotor_height", "battery_ratio", "battery_drop", "gravity"});
  RobotModel m = default_quad_model();
  const double default_kappa = std::abs(m.drag_ratio.front());
  double total = m.total_mass();
  opt(j, "n_links", [&](const json& v) {
    if (!v.is_number_integer()) throw ConfigError("'robot.n_links' must be an integer");
    m.n_links = v.get<int>();
  });
  opt(j, "total_mass", [&](const json& v) { total = number(v, "robot.total_mass"); });
  m.link_mass.assign(std::max(m.n_links, 0), total / std::max(m.n_links, 1));
  opt(j, "link_mass", [&](const json& v) {
    const VecX x = parse_vector(v, "robot.link_mass");
    m.link_mass.assign(x.begin(), x.end());
  });
  double kappa = default_kappa;
  opt(j, "drag_ratio_magnitude", [&](const json& v) { kappa = number(v, "robot.drag_ratio_magnitude"); });
  m.drag_ratio.resize(std::max(m.n_links, 0));
  for (int i = 0; i < m.n_links; ++i) m.drag_ratio[i] = (i % 2 == 0 ? -kappa : kappa);
  opt(j, "drag_ratio", [&](const json& v) {
    const VecX x = parse_vector(v, "robot.drag_ratio");
    m.drag_ratio.assign(x.begin(), x.end());
  });
  opt(j, "link_length", [&](const json& v) { m.link_length = number(v, "robot.link_length"); });
  opt(j, "tilt_beta", [&](const json& v) { m.tilt_beta = parse_angle(v); });
  opt(j, "lambda_max", [&](const json& v) { m.lambda_max = number(v, "robot.lambda_max"); });
  opt(j, "rotor_height", [&](const json& v) { m.rotor_height = number(v, "robot.rotor_height"); });
  opt(j, "battery_ratio", [&](const json& v) { m.battery_ratio = number(v, "robot.battery_ratio"); });
  opt(j, "battery_drop", [&](const json& v) { m.battery_drop = number(v, "robot.battery_drop"); });
  opt(j, "gravity", [&](const json& v) { m.gravity = number(v, "robot.gravity"); });
  try {
    m.validate();
  } catch (const InvalidModel& e) {
    throw ConfigError(std::string("robot: ") + e.what());
  }
  return m;
}

void parse_planner(const json& j, PlanWeights& w, PlanConstraints& c) {
  check_keys(j, "planner", {"w1", "w2", "w3", "variance_floor", "alpha_min", "alpha_max", "delta_psi", "tolerance", "max_iterations"});
  opt(j, "w1", [&](const json& v) { w.w1 = number(v, "planner.w1"); });
  opt(j, "w2", [&](const json& v) { w.w2 = number(v, "planner.w2"); });
  opt(j, "w3", [&](const json& v) { w.w3 = number(v, "planner.w3"); });
  opt(j, "variance_floor", [&](const json& v) { w.variance_floor = number(v, "planner.variance_floor"); });
  opt(j, "alpha_min", [&](const json& v) { c.alpha_min = number(v, "planner.alpha_min"); });
  opt(j, "alpha_max", [&](const json& v) { c.alpha_max = number(v, "planner.alpha_max"); });
  opt(j, "delta_psi", [&](const json& v) { c.delta_psi = number(v, "planner.delta_psi"); });
  opt(j, "tolerance", [&](const json& v) { c.tolerance = number(v, "planner.tolerance"); });
  opt(j, "max_iterations", [&](const json& v) { c.max_iterations = static_cast<int>(number(v, "planner.max_iterations")); });
  if (!(w.w1 > 0 && w.w2 > 0 && w.w3 > 0)) throw ConfigError("planner weights must be positive");
  if (!(c.alpha_min < c.alpha_max)) throw ConfigError("planner.alpha_min must be below alpha_max");
  if (!(c.delta_psi > 0)) throw ConfigError("planner.delta_psi must be positive");
}

void parse_control(const json& j, int n, LQIWeights& lqi, PositionGains& pos, ControllerLimits& lim) {
  check_keys(j, "control", {"M", "W1", "W2", "kp", "ki", "kd", "attitude_integral_limit", "position_integral_limit"});
  opt(j, "M", [&](const json& v) {
    lqi.M = parse_vector(v, "control.M");
    if (lqi.M.size() != 9) throw ConfigError("'control.M' must have 9 entries");
  });
  opt(j, "W1", [&](const json& v) { lqi.W1 = parse_vector(v, "control.W1"); });
  if (lqi.W1.size() != n) throw ConfigError("'control.W1' must have one entry per rotor");
  opt(j, "W2", [&](const json& v) { lqi.W2 = vec3(v, "control.W2"); });
  opt(j, "kp", [&](const json& v) { pos.kp = vec3(v, "control.kp"); });
  opt(j, "ki", [&](const json& v) { pos.ki = vec3(v, "control.ki"); });
  opt(j, "kd", [&](const json& v) { pos.kd = vec3(v, "control.kd"); });
  opt(j, "attitude_integral_limit", [&](const json& v) { lim.attitude_integral = number(v, "control.attitude_integral_limit"); });
  opt(j, "position_integral_limit", [&](const json& v) { lim.position_integral = vec3(v, "control.position_integral_limit"); });
  if ((lqi.M.array() < 0).any() || (lqi.W1.array() <= 0).any() || (lqi.W2.array() < 0).any())
    throw ConfigError("control weights: M, W2 must be nonnegative and W1 positive");
}

JointPlan parse_joints(const json& j, int n_joints) {
  check_keys(j, "scenario.joints", {"initial", "moves"});
  if (!j.contains("initial")) throw ConfigError("'scenario.joints.initial' is required");
  const VecX q0 = parse_vector(j.at("initial"), "scenario.joints.initial");
  if (q0.size() != n_joints) throw ConfigError("'scenario.joints.initial' must have n_links - 1 entries");
  std::vector<JointMove> moves;
  if (j.contains("moves")) {
    if (!j.at("moves").is_array()) throw ConfigError("'scenario.joints.moves' must be a list");
    for (const json& m : j.at("moves")) {
      check_keys(m, "scenario.joints.moves[]", {"to", "speed", "hold"});
      JointMove mv;
      opt(m, "to", [&](const json& v) { mv.to = parse_vector(v, "scenario.joints.moves[].to"); });
      opt(m, "speed", [&](const json& v) { mv.speed = number(v, "scenario.joints.moves[].speed"); });
      opt(m, "hold", [&](const json& v) { mv.hold = number(v, "scenario.joints.moves[].hold"); });
      if (mv.to.size() > 0 && mv.to.size() != n_joints) throw ConfigError("joint move target has the wrong size");
      if (mv.to.size() > 0 && !(mv.speed > 0)) throw ConfigError("joint move needs a positive speed");
      moves.push_back(mv);
    }
  }
  JointPlan plan = JointPlan::from_moves(q0, moves);
  for (const VecX& q : plan.points) {
    if ((q.array().abs() > kPi / 2 + 1e-9).any()) throw ConfigError("joint schedule leaves [-pi/2, pi/2]");
  }
  return plan;
}

Trajectory parse_trajectory(const json& j) {
  check_keys(j, "scenario.trajectory", {"kind", "center", "radius", "period", "yaw0", "yaw_span", "start_time"});
  Trajectory t;
  opt(j, "kind", [&](const json& v) {
    const std::string k = v.get<std::string>();
    if (k == "hold") {
      t.kind = Trajectory::Kind::kHold;
    } else if (k == "circle") {
      t.kind = Trajectory::Kind::kCircle;
    } else {
      throw ConfigError("'scenario.trajectory.kind' must be hold or circle");
    }
  });
  opt(j, "center", [&](const json& v) { t.center = vec3(v, "scenario.trajectory.center"); });
  opt(j, "radius", [&](const json& v) { t.radius = number(v, "scenario.trajectory.radius"); });
  opt(j, "period", [&](const json& v) { t.period = number(v, "scenario.trajectory.period"); });
  opt(j, "yaw0", [&](const json& v) { t.yaw0 = parse_angle(v); });
  opt(j, "yaw_span", [&](const json& v) { t.yaw_span = parse_angle(v); });
  opt(j, "start_time", [&](const json& v) { t.start_time = number(v, "scenario.trajectory.start_time"); });
  if (!(t.period > 0)) throw ConfigError("'scenario.trajectory.period' must be positive");
  return t;
}

Scenario parse_scenario(const json& j, const RobotModel& robot) {
  check_keys(j, "scenario", {"name", "duration", "integration_rate", "control_rate", "planner_rate", "joints", "initial_psi",
                             "branch_lookahead", "trajectory", "start_on_trajectory", "initial_offset", "initial_yaw_offset", "disturbance",
                             "servo_lag", "servo_time_constant", "seed"});
  Scenario s;
  s.joints = JointPlan::constant(VecX::Constant(robot.n_joints(), kPi / 2));
  opt(j, "name", [&](const json& v) { s.name = v.get<std::string>(); });
  opt(j, "duration", [&](const json& v) { s.duration = number(v, "scenario.duration"); });
  opt(j, "integration_rate", [&](const json& v) { s.integration_rate = number(v, "scenario.integration_rate"); });
  opt(j, "control_rate", [&](const json& v) { s.control_rate = number(v, "scenario.control_rate"); });
  opt(j, "planner_rate", [&](const json& v) { s.planner_rate = number(v, "scenario.planner_rate"); });
  opt(j, "joints", [&](const json& v) { s.joints = parse_joints(v, robot.n_joints()); });
  opt(j, "initial_psi", [&](const json& v) {
    s.initial_psi = parse_vector(v, "scenario.initial_psi");
    if (s.initial_psi->size() != robot.n_links) throw ConfigError("'scenario.initial_psi' must have n_links entries");
  });
  opt(j, "branch_lookahead", [&](const json& v) { s.branch_lookahead = v.get<bool>(); });
  opt(j, "trajectory", [&](const json& v) { s.trajectory = parse_trajectory(v); });
  opt(j, "start_on_trajectory", [&](const json& v) { s.start_on_trajectory = v.get<bool>(); });
  opt(j, "initial_offset", [&](const json& v) { s.initial_offset = vec3(v, "scenario.initial_offset"); });
  opt(j, "initial_yaw_offset", [&](const json& v) { s.initial_yaw_offset = parse_angle(v); });
  opt(j, "disturbance", [&](const json& d) {
    check_keys(d, "scenario.disturbance", {"force_body", "torque_body", "force_noise_std"});
    opt(d, "force_body", [&](const json& v) { s.disturbance.force_body = vec3(v, "scenario.disturbance.force_body"); });
    opt(d, "torque_body", [&](const json& v) { s.disturbance.torque_body = vec3(v, "scenario.disturbance.torque_body"); });
    opt(d, "force_noise_std", [&](const json& v) { s.disturbance.force_noise_std = number(v, "scenario.disturbance.force_noise_std"); });
  });
  opt(j, "servo_lag", [&](const json& v) { s.servo_lag = v.get<bool>(); });
  opt(j, "servo_time_constant", [&](const json& v) { s.servo_time_constant = number(v, "scenario.servo_time_constant"); });
  opt(j, "seed", [&](const json& v) { s.seed = v.get<std::uint64_t>(); });
  if (!(s.duration > 0 && s.integration_rate > 0 && s.control_rate > 0 && s.planner_rate > 0))
    throw ConfigError("scenario duration and rates must be positive");
  return s;
}

}  // namespace

double parse_angle(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ConfigError("angle must be a number or a string like \"pi/2\"");
  static const std::regex re(R"(^\s*([+-]?)\s*([0-9.]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$)");
  std::smatch m;
  const std::string s = v.get<std::string>();
  if (!std::regex_match(s, m, re)) throw ConfigError("cannot read angle '" + s + "'");
  double x = kPi;
  if (m[2].length() > 0) x *= std::stod(m[2]);
  if (m[3].length() > 0) x /= std::stod(m[3]);
  return m[1] == "-" ? -x : x;
}

VecX parse_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError("'" + where + "' must be a list");
  VecX x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i)) = parse_angle(v[i]);
  return x;
}

json read_config_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config '" + path + "' must hold an object");
  if (doc.contains("base")) {
    const std::filesystem::path base = std::filesystem::path(path).parent_path() / doc.at("base").get<std::string>();
    json merged = read_config_document(base.string());
    doc.erase("base");
    merged.merge_patch(doc);
    return merged;
  }
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    start = dot + 1;
  }
}

ProjectConfig parse_config(const json& doc) {
  check_keys(doc, "", {"robot", "planner", "control", "scenario", "description"});
  ProjectConfig c;
  if (doc.contains("robot")) c.robot = parse_robot(doc.at("robot"));
  c.lqi = LQIWeights::defaults(c.robot.n_links);
  if (doc.contains("planner")) parse_planner(doc.at("planner"), c.plan_weights, c.plan_constraints);
  if (doc.contains("control")) parse_control(doc.at("control"), c.robot.n_links, c.lqi, c.position, c.limits);
  if (doc.contains("scenario")) {
    c.scenario = parse_scenario(doc.at("scenario"), c.robot);
    c.has_scenario = true;
  }
  return c;
}

ProjectConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = read_config_document(path);
  for (const std::string& o : overrides) apply_override(doc, o);
  try {
    return parse_config(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config '") + path + "': " + e.what());
  }
}

}  // namespace multilink
