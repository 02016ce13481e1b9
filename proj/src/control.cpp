#include "multilink/control.hpp"

#include <algorithm>

#include "multilink/errors.hpp"

namespace multilink {

LQIWeights LQIWeights::defaults(int n_rotors) {
  LQIWeights w;
  w.M.resize(9);
  w.M << 1100, 80, 1100, 80, 100, 50, 10, 10, 0.5;
  w.W1 = VecX::Ones(n_rotors);
  w.W2 = Vec3(20, 20, 20);
  return w;
}

StateMatrices build_state_matrices(const Mat3& inertia, const Mat3X& Qr) {
  Eigen::FullPivLU<Mat3> lu(inertia);
  if (!lu.isInvertible() || lu.rcond() < 1e-12) throw SingularInertia("inertia matrix is not invertible");
  const Mat3X IQ = lu.solve(Qr);
  const Eigen::Index n = Qr.cols();

  StateMatrices s{MatX::Zero(9, 9), MatX::Zero(9, n), MatX::Zero(9, 3)};
  for (int axis = 0; axis < 3; ++axis) {
    s.A(2 * axis, 2 * axis + 1) = 1.0;
    s.A(6 + axis, 2 * axis) = 1.0;
    s.B.row(2 * axis + 1) = -IQ.row(axis);
    s.D(2 * axis + 1, axis) = 1.0;
  }
  return s;
}

MatX input_weight(const LQIWeights& weights, const Mat3X& Qt) {
  if (weights.W1.size() != Qt.cols()) throw DimensionMismatch("W1 size differs from the rotor count");
  return MatX(weights.W1.asDiagonal()) + Qt.transpose() * weights.W2.asDiagonal() * Qt;
}

AttitudeGains solve_lqi_gain(const MatX& A, const MatX& B, const MatX& M, const MatX& N_total,
                             const std::optional<MatX>& initial_gain) {
  const CareSolution care = solve_care(A, B, M, N_total, initial_gain);
  return {care.K, care.residual};
}

MatX pole_placement_gain(const Mat3& inertia, const Mat3X& Qr) {
  const Mat3X IQ = inertia.lu().solve(Qr);
  MatX G = MatX::Zero(3, 9);
  for (int axis = 0; axis < 3; ++axis) {
    G(axis, 2 * axis) = 12.0;
    G(axis, 2 * axis + 1) = 6.0;
    G(axis, 6 + axis) = 8.0;
  }
  const MatX pinv = IQ.completeOrthogonalDecomposition().pseudoInverse();
  return -pinv * G;
}

AttitudeGains synthesize_attitude_gains(const FormState& form, const LQIWeights& weights) {
  const StateMatrices s = build_state_matrices(form.inertia_cog, form.alloc.Qr);
  const MatX N = input_weight(weights, form.alloc.Qt);
  if (weights.M.size() != 9) throw DimensionMismatch("M must have 9 entries");
  return solve_lqi_gain(s.A, s.B, MatX(weights.M.asDiagonal()), N, pole_placement_gain(form.inertia_cog, form.alloc.Qr));
}

VecX attitude_control(const VecX& x, const Vec3& omega, const Mat3& inertia, const Mat3X& Qr, const AttitudeGains& gains) {
  Eigen::JacobiSVD<MatX> svd(Qr, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 3 || sv(2) < 1e-9 * std::max(1.0, sv(0))) throw RankDeficientQr("torque allocation lost rank");
  const Vec3 gyro = omega.cross(inertia * omega);
  return -gains.K * x + svd.solve(gyro);
}

Vec3 position_control(const Vec3& r, const Vec3& v, const Vec3& r_des, const Vec3& v_des, const Vec3& a_des,
                      const Vec3& e_int, const PositionGains& gains, double mass) {
  const Vec3 e = r_des - r;
  const Vec3 de = v_des - v;
  return mass * (gains.kp.cwiseProduct(e) + gains.ki.cwiseProduct(e_int) + gains.kd.cwiseProduct(de) + a_des);
}

std::pair<double, double> desired_attitude(const Vec3& f_total, double yaw) {
  if (f_total.norm() < 1e-9) throw ZeroThrustDemand("total thrust demand vanishes");
  const Vec3 f = rot_z(yaw).transpose() * f_total;
  return {std::atan2(-f.y(), std::hypot(f.x(), f.z())), std::atan2(f.x(), f.z())};
}

VecX collective_thrust(const Vec3& f_total, const Mat3& R_world_cog, const VecX& lambda_s, double mass, double gravity) {
  const double f_t = R_world_cog.col(2).dot(f_total);
  return lambda_s * (f_t / (mass * gravity));
}

ControlOutput cascade_step(ControllerState& state, const BodyState& body, const Reference& ref, const ControlContext& ctx,
                           double dt) {
  const FormState& form = *ctx.form;
  ControlOutput out;

  const Vec3 e_r = ref.r - body.r;
  state.position_integral = (state.position_integral + dt * e_r).cwiseMax(-ctx.limits.position_integral).cwiseMin(ctx.limits.position_integral);
  const Vec3 f_des = position_control(body.r, body.v, ref.r, ref.v, ref.a, state.position_integral, ctx.position, ctx.mass);
  const Vec3 f_total = f_des + Vec3(0, 0, ctx.mass * ctx.gravity);
  const auto [roll_des, pitch_des] = desired_attitude(f_total, ref.yaw);
  out.attitude_des = Vec3(roll_des, pitch_des, ref.yaw);

  const Vec3 rpy = euler_zyx(body.R);
  Vec3 e(wrap_angle(roll_des - rpy.x()), wrap_angle(pitch_des - rpy.y()), wrap_angle(ref.yaw - rpy.z()));
  out.attitude_error = e;
  const Vec3 de(-body.omega.x(), -body.omega.y(), ref.yaw_rate - body.omega.z());
  const double lim = ctx.limits.attitude_integral;
  state.attitude_integral = (state.attitude_integral + dt * e).cwiseMax(-lim).cwiseMin(lim);

  VecX x(9);
  x << e.x(), de.x(), e.y(), de.y(), e.z(), de.z(), state.attitude_integral;
  out.lambda_att = attitude_control(x, body.omega, form.inertia_cog, form.alloc.Qr, *ctx.gains);
  out.lambda_pos = collective_thrust(f_total, body.R, form.alloc.lambda_s, ctx.mass, ctx.gravity);

  out.lambda_des = out.lambda_att + out.lambda_pos;
  for (Eigen::Index i = 0; i < out.lambda_des.size(); ++i) {
    const double c = std::clamp(out.lambda_des(i), 0.0, ctx.lambda_max);
    if (c != out.lambda_des(i)) ++out.clamped;
    out.lambda_des(i) = c;
  }
  return out;
}

bool GainSchedule::due(const VecX& q, const VecX& psi, double t, bool deforming) const {
  if (last_q.size() != q.size() || last_psi.size() != psi.size()) return true;
  double change = 0.0;
  if (q.size() > 0) change = (q - last_q).cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < psi.size(); ++i) change = std::max(change, std::abs(wrap_angle(psi(i) - last_psi(i))));
  if (change > angle_threshold) return true;
  return deforming && change > 0.0 && t - last_time >= period - 1e-12;
}

void GainSchedule::mark(const VecX& q, const VecX& psi, double t) {
  last_q = q;
  last_psi = psi;
  last_time = t;
}

}  // namespace multilink
