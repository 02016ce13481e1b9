#include <doctest.h>

#include <random>

#include "../support.hpp"
#include "multilink/errors.hpp"

using namespace multilink;

TEST_SUITE("feasibility") {
  TEST_CASE("face distances match the LP ray oracle on random bases") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 5; ++trial) {
      const std::vector<Vec3> v = testsupport::spanning_basis(rng);
      const FeasibilityReport rep = tau_min(TorqueBasis{v, 10.0});
      const double oracle = testsupport::sampled_inscribed_radius(v, 10.0, 10000, rng);
      CHECK(rep.tau_min > 0.0);
      CHECK(rep.tau_min <= oracle * (1 + 1e-9));
      CHECK(oracle <= rep.tau_min * 1.005);
    }
  }

  TEST_CASE("a single-sided basis has no ball around the origin") {
    std::vector<Vec3> v{Vec3(1, 0, 0.1), Vec3(0, 1, 0.2), Vec3(-1, 0, 0.3), Vec3(0, -1, 0.1)};
    CHECK(tau_min(TorqueBasis{v, 5.0}).tau_min == doctest::Approx(0.0));
  }

  TEST_CASE("flat rotors: the singular groups lose all guaranteed torque") {
    RobotModel m = default_quad_model();
    m.tilt_beta = 0.0;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-kPi / 2, kPi / 2), up(-kPi, kPi);
    for (int k = 0; k < 20; ++k) {
      const double a = u(rng);
      const VecX psi = (VecX(4) << up(rng), up(rng), up(rng), up(rng)).finished();
      const FeasibilityReport s1 = assess_form(m, Configuration{(VecX(3) << a, 0.0, -a).finished(), psi});
      const FeasibilityReport s2 = assess_form(m, Configuration{(VecX(3) << a, -a, a).finished(), psi});
      CHECK(s1.tau_min <= 1e-9);
      CHECK(s2.tau_min <= 1e-9);
      CHECK((s1.singular_class == SingularClass::kS1 || s1.singular_class == SingularClass::kBoth));
      CHECK((s2.singular_class == SingularClass::kS2 || s2.singular_class == SingularClass::kBoth));
    }
  }

  TEST_CASE("homogeneity, rotation invariance, monotonicity") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Vec3> v = testsupport::spanning_basis(rng);
      const double t1 = tau_min(TorqueBasis{v, 7.0}).tau_min;
      CHECK(tau_min(TorqueBasis{v, 14.0}).tau_min == doctest::Approx(2 * t1).epsilon(1e-12));

      const Mat3 R = Eigen::Quaterniond(Eigen::Vector4d::Random().normalized()).toRotationMatrix();
      std::vector<Vec3> rotated;
      for (const Vec3& x : v) rotated.push_back(R * x);
      CHECK(std::abs(tau_min(TorqueBasis{rotated, 7.0}).tau_min - t1) < 1e-9);

      v.push_back(testsupport::random_unit(rng));
      CHECK(tau_min(TorqueBasis{v, 7.0}).tau_min >= t1 - 1e-12);
    }
  }

  TEST_CASE("degenerate pairs are reported and skipped") {
    std::vector<Vec3> v{Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0), Vec3(-1, -1, 0)};
    const FeasibilityReport r = tau_min(TorqueBasis{v, 1.0});
    CHECK(r.degenerate_pairs.size() == 2);
    CHECK(r.tau_min == doctest::Approx(0.0));  // planar: no ball
    std::vector<Vec3> collinear{Vec3(1, 0, 0), Vec3(-2, 0, 0), Vec3(3, 0, 0)};
    const FeasibilityReport c = tau_min(TorqueBasis{collinear, 1.0});
    CHECK(c.all_degenerate);
    CHECK(c.tau_min == 0.0);
  }

  TEST_CASE("zonotope vertices lie inside every face plane") {
    std::mt19937_64 rng(8);
    const std::vector<Vec3> v = testsupport::spanning_basis(rng);
    const TorqueBasis b{v, 3.0};
    const std::vector<Vec3> verts = zonotope_vertices(b);
    CHECK(verts.size() == 14);  // 4 generic generators in 3-D: 2*(1 + 3 + 3)
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        const Vec3 n = v[i].cross(v[j]).normalized();
        double h = 0;
        for (const Vec3& x : v) h += std::max(0.0, 3.0 * n.dot(x));
        for (const Vec3& p : verts) CHECK(n.dot(p) <= h + 1e-9);
      }
    }
  }

  TEST_CASE("singular class detection") {
    CHECK(detect_singular_class((VecX(3) << -kPi / 2, 0, kPi / 2).finished()) == SingularClass::kS1);
    CHECK(detect_singular_class((VecX(3) << 0.3, -0.3, 0.3).finished()) == SingularClass::kS2);
    CHECK(detect_singular_class(VecX::Zero(3)) == SingularClass::kBoth);
    CHECK(detect_singular_class(VecX::Constant(3, kPi / 2)) == SingularClass::kNone);
    CHECK_THROWS_AS(detect_singular_class(VecX::Zero(2)), DimensionMismatch);
  }
}
