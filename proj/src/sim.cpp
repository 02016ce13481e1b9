#include "multilink/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include <json.hpp>

#include "multilink/errors.hpp"

namespace multilink {

namespace {

struct Derivative {
  Vec3 dr, dv;
  Eigen::Vector4d dq;  // w, x, y, z
  Vec3 domega;
};

struct Flat {
  Vec3 r, v;
  Eigen::Vector4d q;
  Vec3 omega;
};

Flat flatten(const RigidBodyState& s) { return {s.r, s.v, Eigen::Vector4d(s.q_wc.w(), s.q_wc.x(), s.q_wc.y(), s.q_wc.z()), s.omega}; }

Flat advance(const Flat& f, const Derivative& d, double h) {
  return {f.r + h * d.dr, f.v + h * d.dv, f.q + h * d.dq, f.omega + h * d.domega};
}

Derivative derivative(const Flat& f, const Vec3& force_c, const Vec3& torque_c, const Vec3& force_w, const Mat3& inertia,
                      const Mat3& inertia_inv, double mass, double gravity) {
  const Eigen::Quaterniond q(f.q(0), f.q(1), f.q(2), f.q(3));
  const Mat3 R = q.normalized().toRotationMatrix();
  Derivative d;
  d.dr = f.v;
  d.dv = (R * force_c + force_w) / mass - Vec3(0, 0, gravity);
  const Vec3& w = f.omega;
  // qdot = 0.5 q * (0, w)
  d.dq << -0.5 * (f.q(1) * w.x() + f.q(2) * w.y() + f.q(3) * w.z()),
      0.5 * (f.q(0) * w.x() + f.q(2) * w.z() - f.q(3) * w.y()),
      0.5 * (f.q(0) * w.y() + f.q(3) * w.x() - f.q(1) * w.z()),
      0.5 * (f.q(0) * w.z() + f.q(1) * w.y() - f.q(2) * w.x());
  d.domega = inertia_inv * (torque_c - w.cross(inertia * w));
  return d;
}

double wrap_diff_max(const VecX& a, const VecX& b) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(wrap_angle(a(i) - b(i))));
  return m;
}

}  // namespace

RigidBodyState dynamics_step(const RigidBodyState& s, const VecX& lambda, const RobotModel& model, const FormState& form,
                             double dt, const Disturbance& disturbance, const Vec3& extra_force_world) {
  const Mat3 Rct = form.alloc.R_cog_c.transpose();
  const Vec3 force_c = form.alloc.Qt_c * lambda + Rct * disturbance.force_body;
  const Vec3 torque_c = form.alloc.Qr_c * lambda + Rct * disturbance.torque_body;
  const Mat3& I = form.inertia.inertia;
  const Mat3 Iinv = I.inverse();
  const double m = form.inertia.total_mass;
  const double g = model.gravity;

  const Flat y = flatten(s);
  const Derivative k1 = derivative(y, force_c, torque_c, extra_force_world, I, Iinv, m, g);
  const Derivative k2 = derivative(advance(y, k1, 0.5 * dt), force_c, torque_c, extra_force_world, I, Iinv, m, g);
  const Derivative k3 = derivative(advance(y, k2, 0.5 * dt), force_c, torque_c, extra_force_world, I, Iinv, m, g);
  const Derivative k4 = derivative(advance(y, k3, dt), force_c, torque_c, extra_force_world, I, Iinv, m, g);

  RigidBodyState out;
  out.t = s.t + dt;
  out.r = y.r + dt / 6.0 * (k1.dr + 2 * k2.dr + 2 * k3.dr + k4.dr);
  out.v = y.v + dt / 6.0 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
  const Eigen::Vector4d q = y.q + dt / 6.0 * (k1.dq + 2 * k2.dq + 2 * k3.dq + k4.dq);
  out.q_wc = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized();
  out.omega = y.omega + dt / 6.0 * (k1.domega + 2 * k2.domega + 2 * k3.domega + k4.domega);
  return out;
}

double kinetic_energy(const RigidBodyState& s, const FormState& form, double mass) {
  return 0.5 * mass * s.v.squaredNorm() + 0.5 * s.omega.dot(form.inertia.inertia * s.omega);
}

Vec3 angular_momentum_world(const RigidBodyState& s, const FormState& form) { return s.R_wc() * (form.inertia.inertia * s.omega); }

RigidBodyState hover_state(const FormState& form, const Vec3& r, double yaw) {
  RigidBodyState s;
  s.r = r;
  s.q_wc = Eigen::Quaterniond(Mat3(rot_z(yaw) * form.alloc.R_cog_c)).normalized();
  return s;
}

Reference Trajectory::at(double t) const {
  Reference ref;
  const double tau = std::max(0.0, t - start_time);
  if (kind == Kind::kHold) {
    ref.r = center;
    ref.yaw = yaw0;
    return ref;
  }
  const double w = 2.0 * kPi / period;
  const double th = w * tau;
  const bool started = t >= start_time;
  ref.r = center + radius * Vec3(std::cos(th), std::sin(th), 0.0);
  if (started) {
    ref.v = radius * w * Vec3(-std::sin(th), std::cos(th), 0.0);
    ref.a = -radius * w * w * Vec3(std::cos(th), std::sin(th), 0.0);
    ref.yaw_rate = yaw_span / period;
  }
  ref.yaw = yaw0 + yaw_span * tau / period;
  return ref;
}

JointPlan JointPlan::constant(const VecX& q) { return JointPlan{{0.0}, {q}}; }

JointPlan JointPlan::from_moves(const VecX& initial, const std::vector<JointMove>& moves, double t0) {
  JointPlan p{{t0}, {initial}};
  for (const JointMove& m : moves) {
    const VecX& cur = p.points.back();
    if (m.to.size() > 0) {
      if (m.to.size() != cur.size()) throw DimensionMismatch("joint move has the wrong size");
      if (!(m.speed > 0.0)) throw DimensionMismatch("joint move needs a positive speed");
      const double span = (m.to - cur).cwiseAbs().maxCoeff();
      p.times.push_back(p.times.back() + span / m.speed);
      p.points.push_back(m.to);
    }
    if (m.hold > 0.0) {
      p.times.push_back(p.times.back() + m.hold);
      p.points.push_back(p.points.back());
    }
  }
  return p;
}

VecX JointPlan::at(double t) const {
  if (t <= times.front()) return points.front();
  if (t >= times.back()) return points.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  const double span = times[k] - times[k - 1];
  const double s = span > 0.0 ? (t - times[k - 1]) / span : 1.0;
  return points[k - 1] + s * (points[k] - points[k - 1]);
}

bool JointPlan::moving(double t) const {
  if (t < times.front() || t >= times.back()) return false;
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  return (points[k] - points[k - 1]).cwiseAbs().maxCoeff() > 0.0;
}

SimulationResult run_scenario(const RobotModel& model, const Scenario& sc, const SimulationSettings& settings) {
  model.validate();
  if (!(sc.integration_rate > 0 && sc.control_rate > 0 && sc.planner_rate > 0 && sc.duration > 0))
    throw DimensionMismatch("scenario rates and duration must be positive");
  if (sc.joints.points.empty()) throw DimensionMismatch("scenario has no joint schedule");

  SimulationResult result;
  const double dt = 1.0 / sc.integration_rate;
  const long control_every = std::max(1L, std::lround(sc.integration_rate / sc.control_rate));
  const long plan_every = std::max(1L, std::lround(sc.integration_rate / sc.planner_rate));
  const long n_steps = std::lround(sc.duration * sc.integration_rate);
  const double control_dt = control_every * dt;

  auto abort_run = [&result](double t, const std::string& why) {
    result.aborted = true;
    result.abort_time = t;
    result.abort_reason = why;
    return result;
  };

  VecX q_cmd = sc.joints.at(0.0);
  VecX psi_bar;
  try {
    if (sc.initial_psi) {
      psi_bar = *sc.initial_psi;
    } else if (sc.branch_lookahead && sc.joints.points.size() > 1) {
      JointSchedule ahead;
      const long last = std::min(n_steps, std::lround(std::ceil(sc.joints.end_time() * sc.integration_rate)) + plan_every);
      for (long k = 0; k <= last; k += plan_every) ahead.emplace_back(k * dt, sc.joints.at(k * dt));
      psi_bar = choose_branch(model, ahead, settings.plan_weights, settings.plan_constraints).initial_psi;
      ++result.plan_solves;
    } else {
      psi_bar = optimize_vectoring(model, q_cmd, settings.plan_weights, settings.plan_constraints).psi_bar;
      ++result.plan_solves;
    }
  } catch (const Error& e) {
    return abort_run(0.0, std::string("initial plan: ") + e.what());
  }
  VecX psi_cmd = psi_bar;
  VecX q_act = q_cmd, psi_act = psi_cmd;
  VecX last_planned_q = q_cmd;

  FormState form, ctrl_form;
  AttitudeGains gains;
  GainSchedule schedule;
  try {
    form = evaluate_form(model, Configuration{q_act, psi_act});
    ctrl_form = form;
    gains = synthesize_attitude_gains(ctrl_form, settings.lqi);
    schedule.mark(q_act, psi_act, 0.0);
    ++result.gain_updates;
  } catch (const Error& e) {
    return abort_run(0.0, std::string("initial form: ") + e.what());
  }

  const Reference ref0 = sc.trajectory.at(0.0);
  RigidBodyState state = hover_state(form, ref0.r + sc.initial_offset, ref0.yaw + sc.initial_yaw_offset);
  if (sc.start_on_trajectory) {
    state.v = ref0.v;
    state.omega = form.alloc.R_cog_c.transpose() * Vec3(0, 0, ref0.yaw_rate);
  }

  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ControllerState ctrl;
  VecX lambda = form.alloc.lambda_s;
  const double servo_alpha = 1.0 - std::exp(-dt / sc.servo_time_constant);
  bool replanned = false;

  for (long k = 0; k < n_steps; ++k) {
    const double t = k * dt;

    if (k > 0 && k % plan_every == 0) {
      const VecX q_plan = sc.joints.at(t);
      if ((q_plan - last_planned_q).cwiseAbs().maxCoeff() > 1e-12) {
        try {
          const PlanResult pr = optimize_vectoring(model, q_plan, settings.plan_weights, settings.plan_constraints, psi_bar);
          if (!pr.feasible) throw Infeasible("static thrust is not strictly positive");
          psi_bar = pr.psi_bar;
        } catch (const Error& e) {
          return abort_run(t, std::string("plan break at q = ") + format_joints(q_plan) + ": " + e.what());
        }
        ++result.plan_solves;
        last_planned_q = q_plan;
        for (Eigen::Index i = 0; i < psi_cmd.size(); ++i) psi_cmd(i) += wrap_angle(psi_bar(i) - psi_cmd(i));
        replanned = true;
      }
    }

    q_cmd = sc.joints.at(t);
    if (sc.servo_lag) {
      q_act += servo_alpha * (q_cmd - q_act);
      psi_act += servo_alpha * (psi_cmd - psi_act);
    } else {
      q_act = q_cmd;
      psi_act = psi_cmd;
    }
    try {
      form = evaluate_form(model, Configuration{q_act, psi_act});
    } catch (const Error& e) {
      return abort_run(t, e.what());
    }

    if (k % control_every == 0) {
      const bool deforming = sc.joints.moving(t) || (sc.servo_lag && ((q_cmd - q_act).cwiseAbs().maxCoeff() > 1e-9 ||
                                                                      (psi_cmd - psi_act).cwiseAbs().maxCoeff() > 1e-9));
      bool updated = false;
      if (schedule.due(q_act, psi_act, t, deforming)) {
        try {
          ctrl_form = form;
          gains = synthesize_attitude_gains(ctrl_form, settings.lqi);
        } catch (const Error& e) {
          return abort_run(t, e.what());
        }
        schedule.mark(q_act, psi_act, t);
        ++result.gain_updates;
        updated = true;
      }

      const Reference ref = sc.trajectory.at(t);
      BodyState body;
      body.r = state.r;
      body.v = state.v;
      body.R = state.R_world_cog(ctrl_form);
      body.omega = ctrl_form.alloc.R_cog_c * state.omega;

      ControlContext ctx;
      ctx.form = &ctrl_form;
      ctx.gains = &gains;
      ctx.position = settings.position;
      ctx.limits = settings.limits;
      ctx.mass = model.total_mass();
      ctx.gravity = model.gravity;
      ctx.lambda_max = model.lambda_max;
      ControlOutput out;
      try {
        out = cascade_step(ctrl, body, ref, ctx, control_dt);
      } catch (const Error& e) {
        return abort_run(t, e.what());
      }
      lambda = out.lambda_des;

      TelemetryRecord rec;
      rec.t = t;
      rec.r = state.r;
      rec.r_des = ref.r;
      rec.v = state.v;
      rec.rpy = euler_zyx(body.R);
      rec.rpy_des = out.attitude_des;
      rec.omega = body.omega;
      rec.attitude_error = out.attitude_error;
      rec.q = q_act;
      rec.psi = wrap_angles(psi_act);
      rec.psi_bar = psi_bar;
      rec.lambda_des = lambda;
      rec.lambda_s = form.alloc.lambda_s;
      rec.tau_min = tau_min(torque_basis(form.alloc, model.lambda_max)).tau_min;
      rec.clamped = out.clamped;
      rec.replanned = replanned;
      rec.gains_updated = updated;
      replanned = false;
      result.telemetry.push_back(std::move(rec));
    }

    Vec3 noise = Vec3::Zero();
    if (sc.disturbance.force_noise_std > 0.0) {
      noise = sc.disturbance.force_noise_std * Vec3(normal(rng), normal(rng), normal(rng));
    }
    state = dynamics_step(state, lambda, model, form, dt, sc.disturbance, noise);
    if (!state.r.allFinite() || !state.omega.allFinite()) return abort_run(t, "state diverged");
  }
  return result;
}

Metrics compute_metrics(const std::vector<TelemetryRecord>& telemetry, double from_time) {
  Metrics m;
  double min_tau = 1e300;
  std::size_t n = 0, saturated = 0;
  Vec3 sq = Vec3::Zero();
  double yaw_sq = 0.0;
  const TelemetryRecord* prev = nullptr;
  const TelemetryRecord* first = nullptr;
  for (const TelemetryRecord& r : telemetry) {
    if (r.t < from_time) continue;
    if (!first) first = &r;
    const Vec3 e = r.r_des - r.r;
    const double ey = wrap_angle(r.rpy_des.z() - r.rpy.z());
    sq += e.cwiseAbs2();
    m.position_max = m.position_max.cwiseMax(e.cwiseAbs());
    yaw_sq += ey * ey;
    m.yaw_max = std::max(m.yaw_max, std::abs(ey));
    min_tau = std::min(min_tau, r.tau_min);
    if (r.clamped > 0) ++saturated;
    if (prev) m.max_psi_step = std::max(m.max_psi_step, wrap_diff_max(r.psi, prev->psi));
    m.final_position_error = e;
    prev = &r;
    ++n;
  }
  if (n == 0) throw EmptyTelemetry("no telemetry samples");
  m.samples = n;
  m.position_rms = (sq / static_cast<double>(n)).cwiseSqrt();
  m.yaw_rms = std::sqrt(yaw_sq / static_cast<double>(n));
  m.min_tau = min_tau;
  m.saturation_fraction = static_cast<double>(saturated) / static_cast<double>(n);
  m.duration = prev->t - first->t;
  return m;
}

void write_telemetry_csv(std::ostream& os, const std::vector<TelemetryRecord>& telemetry) {
  const Eigen::Index nq = telemetry.empty() ? 0 : telemetry.front().q.size();
  const Eigen::Index np = telemetry.empty() ? 0 : telemetry.front().psi.size();
  os << "t,x,y,z,x_des,y_des,z_des,vx,vy,vz,roll,pitch,yaw,roll_des,pitch_des,yaw_des,wx,wy,wz,err_roll,err_pitch,err_yaw";
  for (Eigen::Index i = 0; i < nq; ++i) os << ",q" << i + 1;
  for (Eigen::Index i = 0; i < np; ++i) os << ",psi" << i + 1;
  for (Eigen::Index i = 0; i < np; ++i) os << ",psi_bar" << i + 1;
  for (Eigen::Index i = 0; i < np; ++i) os << ",lambda" << i + 1;
  for (Eigen::Index i = 0; i < np; ++i) os << ",lambda_s" << i + 1;
  os << ",tau_min,clamped,replanned,gains_updated\n";
  const auto old_precision = os.precision(10);
  for (const TelemetryRecord& r : telemetry) {
    os << r.t;
    for (const Vec3* v : {&r.r, &r.r_des, &r.v, &r.rpy, &r.rpy_des, &r.omega, &r.attitude_error}) {
      os << ',' << v->x() << ',' << v->y() << ',' << v->z();
    }
    for (const VecX* v : {&r.q, &r.psi, &r.psi_bar, &r.lambda_des, &r.lambda_s}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << (*v)(i);
    }
    os << ',' << r.tau_min << ',' << r.clamped << ',' << int(r.replanned) << ',' << int(r.gains_updated) << '\n';
  }
  os.precision(old_precision);
}

std::string metrics_json(const Metrics& m, const SimulationResult& result, int indent) {
  auto vec = [](const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); };
  nlohmann::json j;
  j["position_rms"] = vec(m.position_rms);
  j["position_max"] = vec(m.position_max);
  j["yaw_rms"] = m.yaw_rms;
  j["yaw_max"] = m.yaw_max;
  j["min_tau_min"] = m.min_tau;
  j["max_psi_step"] = m.max_psi_step;
  j["saturation_fraction"] = m.saturation_fraction;
  j["final_position_error"] = vec(m.final_position_error);
  j["duration"] = m.duration;
  j["samples"] = m.samples;
  j["aborted"] = result.aborted;
  if (result.aborted) {
    j["abort_reason"] = result.abort_reason;
    j["abort_time"] = result.abort_time;
  }
  j["gain_updates"] = result.gain_updates;
  j["plan_solves"] = result.plan_solves;
  return j.dump(indent);
}

}  // namespace multilink
