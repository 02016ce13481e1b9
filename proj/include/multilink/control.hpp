#pragma once

#include <optional>
#include <utility>

#include "multilink/allocation.hpp"
#include "multilink/riccati.hpp"

namespace multilink {

/// Diagonals of the LQI weights.
struct LQIWeights {
  VecX M;   // 9: [e_x, de_x, e_y, de_y, e_z, de_z, ie_x, ie_y, ie_z]
  VecX W1;  // N
  Vec3 W2 = Vec3::Zero();

  static LQIWeights defaults(int n_rotors);
};

struct StateMatrices {
  MatX A;  // 9x9
  MatX B;  // 9xN
  MatX D;  // 9x3, reference input
};

/// Sparse LQI model; B rows 1, 3, 5 hold -(I^-1 Qr). Throws SingularInertia.
StateMatrices build_state_matrices(const Mat3& inertia, const Mat3X& Qr);

/// W1 + Qt^T W2 Qt.
MatX input_weight(const LQIWeights& weights, const Mat3X& Qt);

struct AttitudeGains {
  MatX K;  // N x 9, lambda_att = -K x + feedforward
  double residual = 0.0;
};

/// K = N^-1 B^T P with P from the ARE. Throws AREFailed.
AttitudeGains solve_lqi_gain(const MatX& A, const MatX& B, const MatX& M, const MatX& N_total,
                             const std::optional<MatX>& initial_gain = std::nullopt);

/// Gain that places every axis at (s + 2)^3; used to start the Riccati iteration.
MatX pole_placement_gain(const Mat3& inertia, const Mat3X& Qr);

/// Full synthesis for one form: state matrices, input weight, ARE.
AttitudeGains synthesize_attitude_gains(const FormState& form, const LQIWeights& weights);

/// -K x + Qr^# (omega x I omega). Throws RankDeficientQr.
VecX attitude_control(const VecX& x, const Vec3& omega, const Mat3& inertia, const Mat3X& Qr, const AttitudeGains& gains);

struct PositionGains {
  Vec3 kp{2.3, 2.3, 3.6};
  Vec3 ki{0.02, 0.02, 3.4};
  Vec3 kd{4.0, 4.0, 1.55};
};

/// m (K_P e + K_I int e + K_D de + a_des), e = r_des - r. Gravity not included.
Vec3 position_control(const Vec3& r, const Vec3& v, const Vec3& r_des, const Vec3& v_des, const Vec3& a_des,
                      const Vec3& e_int, const PositionGains& gains, double mass);

/// Roll and pitch that align the thrust axis with `f_total` (gravity included) at the given yaw.
/// Throws ZeroThrustDemand.
std::pair<double, double> desired_attitude(const Vec3& f_total, double yaw);

/// lambda_s scaled by the thrust demand projected on the body z axis.
VecX collective_thrust(const Vec3& f_total, const Mat3& R_world_cog, const VecX& lambda_s, double mass, double gravity);

struct ControllerLimits {
  double attitude_integral = 0.5;  // rad s
  Vec3 position_integral{10.0, 10.0, 10.0};  // m s
};

/// Integrator memory of the cascade.
struct ControllerState {
  Vec3 position_integral = Vec3::Zero();
  Vec3 attitude_integral = Vec3::Zero();
};

struct BodyState {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Mat3 R = Mat3::Identity();  // {W}R{CoG}
  Vec3 omega = Vec3::Zero();  // in {CoG}
};

struct Reference {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

/// What the controller knows about the current form.
struct ControlContext {
  const FormState* form = nullptr;
  const AttitudeGains* gains = nullptr;
  PositionGains position;
  ControllerLimits limits;
  double mass = 0.0;
  double gravity = 9.80665;
  double lambda_max = 0.0;
};

struct ControlOutput {
  VecX lambda_des;
  VecX lambda_att;
  VecX lambda_pos;
  Vec3 attitude_des = Vec3::Zero();   // roll, pitch, yaw
  Vec3 attitude_error = Vec3::Zero();
  int clamped = 0;  // rotors clamped to [0, lambda_max]
};

/// One tick of position then attitude control; integrators advance by dt.
ControlOutput cascade_step(ControllerState& state, const BodyState& body, const Reference& ref, const ControlContext& ctx,
                           double dt);

/// Decides when the attitude gains are stale.
struct GainSchedule {
  double angle_threshold = 0.02;  // rad, any component of (q, psi)
  double period = 0.05;           // s, while deforming
  VecX last_q;
  VecX last_psi;
  double last_time = -1e300;

  bool due(const VecX& q, const VecX& psi, double t, bool deforming) const;
  void mark(const VecX& q, const VecX& psi, double t);
};

}  // namespace multilink
