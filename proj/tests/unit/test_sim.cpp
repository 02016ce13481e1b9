#include <doctest.h>

#include <sstream>

#include "multilink/errors.hpp"
#include "multilink/sim.hpp"

using namespace multilink;

namespace {

FormState normal_form(const RobotModel& m) {
  const VecX psi = (VecX(4) << kPi, 0, kPi, 0).finished();
  return evaluate_form(m, Configuration{VecX::Constant(3, kPi / 2), psi});
}

// asymmetric body tumbling freely
RigidBodyState tumble(const RigidBodyState& s0, const RobotModel& m, const FormState& f, double dt, double T) {
  RigidBodyState s = s0;
  const VecX lambda = VecX::Zero(f.alloc.lambda_s.size());
  RobotModel weightless = m;
  weightless.gravity = 0.0;
  const int n = static_cast<int>(std::lround(T / dt));
  for (int k = 0; k < n; ++k) s = dynamics_step(s, lambda, weightless, f, dt);
  return s;
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("static thrust hovers in place") {
    const RobotModel m = default_quad_model();
    const FormState f = evaluate_form(m, Configuration{(VecX(3) << 0.9, -0.5, 1.2).finished(), (VecX(4) << 0.3, 2.0, -1.0, 0.5).finished()});
    RigidBodyState s = hover_state(f, Vec3(0, 0, 1), 0.4);
    const Mat3 R0 = s.R_wc();
    for (int k = 0; k < 1000; ++k) s = dynamics_step(s, f.alloc.lambda_s, m, f, 1e-3);
    CHECK((s.r - Vec3(0, 0, 1)).norm() < 1e-9);
    CHECK(s.v.norm() < 1e-9);
    CHECK(s.omega.norm() < 1e-9);
    CHECK((s.R_wc() - R0).norm() < 1e-9);
    CHECK((s.R_world_cog(f) - rot_z(0.4)).norm() < 1e-12);
  }

  TEST_CASE("free fall") {
    const RobotModel m = default_quad_model();
    const FormState f = normal_form(m);
    RigidBodyState s;
    s.v = Vec3(1.0, 0.0, 2.0);
    for (int k = 0; k < 500; ++k) s = dynamics_step(s, VecX::Zero(4), m, f, 2e-3);
    CHECK(s.r.x() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.r.z() == doctest::Approx(2.0 - 0.5 * m.gravity).epsilon(1e-12));
    CHECK(s.v.z() == doctest::Approx(2.0 - m.gravity).epsilon(1e-12));
  }

  TEST_CASE("torque-free motion conserves energy and momentum") {
    const RobotModel m = default_quad_model();
    const FormState f = evaluate_form(m, Configuration{(VecX(3) << 0.9, -0.5, 1.2).finished(), VecX::Zero(4)});
    RigidBodyState s0;
    s0.omega = Vec3(1.5, -0.7, 2.0);
    const double E0 = kinetic_energy(s0, f, m.total_mass());
    const Vec3 L0 = angular_momentum_world(s0, f);
    const RigidBodyState s = tumble(s0, m, f, 1e-3, 10.0);
    CHECK(std::abs(kinetic_energy(s, f, m.total_mass()) - E0) < 1e-6 * E0);
    CHECK((angular_momentum_world(s, f) - L0).norm() < 1e-6 * L0.norm());
  }

  TEST_CASE("integrator is fourth order") {
    const RobotModel m = default_quad_model();
    const FormState f = evaluate_form(m, Configuration{(VecX(3) << 0.9, -0.5, 1.2).finished(), VecX::Zero(4)});
    RigidBodyState s0;
    s0.omega = Vec3(3.0, -2.0, 4.0);
    const double T = 1.0;
    const RigidBodyState ref = tumble(s0, m, f, 1e-4, T);
    auto err = [&](double dt) {
      const RigidBodyState s = tumble(s0, m, f, dt, T);
      return (s.omega - ref.omega).norm() + (s.R_wc() - ref.R_wc()).norm();
    };
    const double e1 = err(0.02), e2 = err(0.01);
    const double order = std::log2(e1 / e2);
    MESSAGE("observed order " << order);
    CHECK(order >= 3.9);
  }

  TEST_CASE("metrics") {
    std::vector<TelemetryRecord> t;
    for (int k = 0; k < 2000; ++k) {
      TelemetryRecord r;
      r.t = k * 1e-3;
      r.r_des = Vec3(1, 2, 3);
      r.r = r.r_des;
      r.psi = VecX::Zero(2);
      r.tau_min = 2.0;
      t.push_back(r);
    }
    Metrics m = compute_metrics(t);
    CHECK(m.position_rms.norm() == 0.0);
    CHECK(m.min_tau == 2.0);
    CHECK(m.samples == 2000);

    for (auto& r : t) {
      r.r.x() = r.r_des.x() - 0.3 * std::sin(2 * kPi * 5 * r.t);
      r.rpy.z() = 0.1 * std::sin(2 * kPi * r.t);
    }
    m = compute_metrics(t);
    CHECK(m.position_rms.x() == doctest::Approx(0.3 / std::sqrt(2.0)).epsilon(1e-3));
    CHECK(m.yaw_rms == doctest::Approx(0.1 / std::sqrt(2.0)).epsilon(1e-3));
    CHECK(m.position_max.x() == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(compute_metrics(t, 1.0).samples == 1000);
    CHECK_THROWS_AS(compute_metrics({}), EmptyTelemetry);
    CHECK_THROWS_AS(compute_metrics(t, 5.0), EmptyTelemetry);
  }

  TEST_CASE("joint plans") {
    const VecX a = VecX::Constant(3, kPi / 2);
    const JointPlan p = JointPlan::from_moves(a, {JointMove{VecX(), 0, 2.0}, JointMove{VecX::Zero(3), 0.25, 1.0}});
    CHECK(p.end_time() == doctest::Approx(2.0 + 2 * kPi + 1.0));
    CHECK(p.at(1.0) == a);
    CHECK_FALSE(p.moving(1.0));
    CHECK(p.moving(3.0));
    CHECK(p.at(2.0 + kPi)(0) == doctest::Approx(kPi / 4));
    CHECK(p.at(100.0).norm() == 0.0);
  }

  TEST_CASE("circle reference") {
    Trajectory c;
    c.kind = Trajectory::Kind::kCircle;
    c.center = Vec3(0, 0, 1);
    c.radius = 1.0;
    c.period = 30.0;
    c.yaw_span = 2 * kPi;
    const double h = 1e-5;
    for (double t : {0.5, 7.0, 22.0}) {
      const Reference r = c.at(t);
      CHECK(std::abs((r.r - c.center).norm() - 1.0) < 1e-12);
      CHECK(((c.at(t + h).r - c.at(t - h).r) / (2 * h) - r.v).norm() < 1e-8);
      CHECK(((c.at(t + h).v - c.at(t - h).v) / (2 * h) - r.a).norm() < 1e-8);
      CHECK((c.at(t + h).yaw - c.at(t - h).yaw) / (2 * h) == doctest::Approx(r.yaw_rate));
    }
  }

  TEST_CASE("short hover run is deterministic and writes a CSV") {
    const RobotModel m = default_quad_model();
    Scenario sc;
    sc.duration = 1.0;
    sc.joints = JointPlan::constant(VecX::Constant(3, kPi / 2));
    sc.trajectory.center = Vec3(0, 0, 1);
    sc.initial_offset = Vec3(0.01, 0, 0);
    sc.disturbance.force_noise_std = 0.1;
    sc.seed = 3;
    const SimulationSettings settings{LQIWeights::defaults(4), PositionGains{}, ControllerLimits{}, PlanWeights{}, PlanConstraints{}};
    const SimulationResult a = run_scenario(m, sc, settings);
    const SimulationResult b = run_scenario(m, sc, settings);
    REQUIRE_FALSE(a.aborted);
    REQUIRE(a.telemetry.size() == 200);
    CHECK(a.telemetry.back().r == b.telemetry.back().r);
    const Metrics mt = compute_metrics(a.telemetry);
    CHECK(mt.position_max.x() <= 0.0100001);
    CHECK(mt.saturation_fraction == 0.0);

    std::ostringstream os;
    write_telemetry_csv(os, a.telemetry);
    std::string header;
    std::getline(std::istringstream(os.str()) >> std::ws, header);
    CHECK(header.rfind("t,x,y,z,x_des,y_des,z_des", 0) == 0);
    CHECK(header.find(",q3,psi1,") != std::string::npos);
    CHECK(header.find("tau_min,clamped,replanned,gains_updated") != std::string::npos);
    std::size_t lines = 0;
    for (char ch : os.str()) lines += ch == '\n';
    CHECK(lines == 201);

    sc.duration = -1;
    CHECK_THROWS_AS(run_scenario(m, sc, settings), DimensionMismatch);
  }
}
