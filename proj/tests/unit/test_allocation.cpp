#include <doctest.h>

#include <random>

#include "multilink/allocation.hpp"
#include "multilink/errors.hpp"

using namespace multilink;

namespace {

Configuration random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uq(-kPi / 2, kPi / 2), up(-kPi, kPi);
  Configuration c{VecX(3), VecX(4)};
  for (int i = 0; i < 3; ++i) c.q(i) = uq(rng);
  for (int i = 0; i < 4; ++i) c.psi(i) = up(rng);
  return c;
}

}  // namespace

TEST_SUITE("allocation") {
  TEST_CASE("torque columns equal p x b + kappa b") {
    const RobotModel m = default_quad_model();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const Configuration c = random_config(rng);
      const FrameSet f = forward_kinematics(m, c);
      const InertiaSummary s = aggregate_inertia(m, f);
      const WrenchBasis w = rotor_wrench_basis(f, m, s);
      for (int i = 0; i < 4; ++i) {
        const Vec3 b = f.rotors[i].rotation * Vec3::UnitZ();
        const Vec3 p = f.rotors[i].translation - s.cog_origin;
        const Vec3 expected = p.cross(b) + m.drag_ratio[i] * b;
        CHECK((w.force.col(i) - b).norm() < 1e-14);
        CHECK((w.torque.col(i) - expected).norm() < 1e-14);
      }
    }
  }

  TEST_CASE("static thrust balances gravity with zero torque in {CoG}") {
    const RobotModel m = default_quad_model();
    const double mg = m.total_mass() * m.gravity;
    std::mt19937_64 rng(17);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const Configuration c = random_config(rng);
      FormState s;
      try {
        s = evaluate_form(m, c);
      } catch (const SingularAllocation&) {
        continue;
      }
      ++checked;
      CHECK((s.alloc.Qt * s.alloc.lambda_s - Vec3(0, 0, mg)).norm() < 1e-9);
      CHECK((s.alloc.Qr * s.alloc.lambda_s).norm() < 1e-9);
    }
    CHECK(checked > 190);
  }

  TEST_CASE("CoG rotation agrees with the shortest-arc quaternion up to a yaw") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      const Vec3 f(0.3 * g(rng), 0.3 * g(rng), 1.0 + 0.2 * std::abs(g(rng)));
      const CogOrientation o = cog_orientation(f);
      const Mat3 arc = Eigen::Quaterniond::FromTwoVectors(f, Vec3::UnitZ()).toRotationMatrix();
      CHECK((o.rotation * f.normalized() - Vec3::UnitZ()).norm() < 1e-12);
      const Mat3 rel = o.rotation * arc.transpose();
      CHECK(rel(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(o.alpha_x) < kPi / 2);
    }
    CHECK_THROWS_AS(cog_orientation(Vec3::Zero()), ZeroForce);
  }

  TEST_CASE("symmetric forms need 1/cos(beta) of the weight") {
    const RobotModel m = default_quad_model();
    const double mg = m.total_mass() * m.gravity;
    const VecX psis[] = {(VecX(4) << kPi, 0, kPi, 0).finished(), (VecX(4) << 0, kPi, 0, kPi).finished()};
    for (const VecX& psi : psis) {
      const FormState s = evaluate_form(m, Configuration{VecX::Constant(3, kPi / 2), psi});
      CHECK(s.alloc.lambda_s.sum() / mg == doctest::Approx(1.0 / std::cos(m.tilt_beta)).epsilon(1e-9));
      CHECK(std::abs(s.alloc.alpha_x) < 1e-9);
      CHECK(std::abs(s.alloc.alpha_y) < 1e-9);
    }
  }

  TEST_CASE("flat rotors in the line form make the hover system singular") {
    RobotModel m = default_quad_model();
    m.tilt_beta = 0.0;
    CHECK_THROWS_AS(evaluate_form(m, Configuration{VecX::Zero(3), VecX::Zero(4)}), SingularAllocation);
  }
}
