#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "multilink/control.hpp"
#include "multilink/planner.hpp"

namespace multilink {

/// Rigid-body state. Attitude is kept for the frame {C} (fixed to the root link,
/// origin at the CoG), which stays continuous while the form changes.
struct RigidBodyState {
  double t = 0.0;
  Vec3 r = Vec3::Zero();  // CoG in {W}
  Vec3 v = Vec3::Zero();
  Eigen::Quaterniond q_wc = Eigen::Quaterniond::Identity();
  Vec3 omega = Vec3::Zero();  // in {C}

  Mat3 R_wc() const { return q_wc.toRotationMatrix(); }
  /// {W}R{CoG} for a given form.
  Mat3 R_world_cog(const FormState& form) const { return R_wc() * form.alloc.R_cog_c.transpose(); }
};

/// Constant wrench in {CoG} plus optional white force noise in {W}.
struct Disturbance {
  Vec3 force_body = Vec3::Zero();
  Vec3 torque_body = Vec3::Zero();
  double force_noise_std = 0.0;  // N
};

/// Full nonlinear rigid-body step (RK4) with thrusts and form held over dt.
/// `extra_force_world` is added to the translational equation.
RigidBodyState dynamics_step(const RigidBodyState& s, const VecX& lambda, const RobotModel& model, const FormState& form,
                             double dt, const Disturbance& disturbance = {}, const Vec3& extra_force_world = Vec3::Zero());

double kinetic_energy(const RigidBodyState& s, const FormState& form, double mass);
Vec3 angular_momentum_world(const RigidBodyState& s, const FormState& form);

/// Level hover at `r` with yaw: {CoG} level, so {C} is tilted by R_cog_c^T.
RigidBodyState hover_state(const FormState& form, const Vec3& r, double yaw);

struct Trajectory {
  enum class Kind { kHold, kCircle };
  Kind kind = Kind::kHold;
  Vec3 center = Vec3::Zero();  // hold point, or circle center
  double radius = 1.0;
  double period = 30.0;
  double yaw0 = 0.0;
  double yaw_span = 0.0;  // rad added linearly over one period (circle) or held (hold)
  double start_time = 0.0;

  Reference at(double t) const;
};

struct JointMove {
  VecX to;           // empty for a hold
  double speed = 0;  // rad/s
  double hold = 0;   // s
};

/// Piecewise-linear joint schedule.
struct JointPlan {
  std::vector<double> times;
  std::vector<VecX> points;

  static JointPlan constant(const VecX& q);
  static JointPlan from_moves(const VecX& initial, const std::vector<JointMove>& moves, double t0 = 0.0);
  VecX at(double t) const;
  bool moving(double t) const;
  double end_time() const { return times.empty() ? 0.0 : times.back(); }
};

struct Scenario {
  std::string name = "hover";
  double duration = 10.0;
  double integration_rate = 1000.0;
  double control_rate = 200.0;
  double planner_rate = 20.0;
  JointPlan joints;
  std::optional<VecX> initial_psi;  // otherwise the global planner picks it
  bool branch_lookahead = true;     // pick primal or dual start by planning the joint schedule ahead
  Trajectory trajectory;
  bool start_on_trajectory = true;
  Vec3 initial_offset = Vec3::Zero();  // added to the start position
  double initial_yaw_offset = 0.0;
  Disturbance disturbance;
  bool servo_lag = false;
  double servo_time_constant = 0.1;  // s
  std::uint64_t seed = 0;
};

struct SimulationSettings {
  LQIWeights lqi;
  PositionGains position;
  ControllerLimits limits;
  PlanWeights plan_weights;
  PlanConstraints plan_constraints;
};

struct TelemetryRecord {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  Vec3 r_des = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();      // {W}R{CoG} as roll, pitch, yaw
  Vec3 rpy_des = Vec3::Zero();
  Vec3 omega = Vec3::Zero();    // {CoG}
  Vec3 attitude_error = Vec3::Zero();
  VecX q;
  VecX psi;      // actual
  VecX psi_bar;  // latest planner output
  VecX lambda_des;
  VecX lambda_s;
  double tau_min = 0.0;
  int clamped = 0;
  bool replanned = false;
  bool gains_updated = false;
};

struct SimulationResult {
  std::vector<TelemetryRecord> telemetry;
  bool aborted = false;
  std::string abort_reason;
  double abort_time = 0.0;
  int gain_updates = 0;
  int plan_solves = 0;
};

SimulationResult run_scenario(const RobotModel& model, const Scenario& scenario, const SimulationSettings& settings);

struct Metrics {
  Vec3 position_rms = Vec3::Zero();
  Vec3 position_max = Vec3::Zero();
  double yaw_rms = 0.0;
  double yaw_max = 0.0;
  double min_tau = 0.0;
  double max_psi_step = 0.0;
  double saturation_fraction = 0.0;
  Vec3 final_position_error = Vec3::Zero();
  double duration = 0.0;
  std::size_t samples = 0;
};

/// Throws EmptyTelemetry. `from_time` skips the initial part of the run.
Metrics compute_metrics(const std::vector<TelemetryRecord>& telemetry, double from_time = -1e300);

void write_telemetry_csv(std::ostream& os, const std::vector<TelemetryRecord>& telemetry);
std::string metrics_json(const Metrics& m, const SimulationResult& result, int indent = 2);

}  // namespace multilink
