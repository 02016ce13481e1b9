#include <doctest.h>

#include "multilink/cobyla.hpp"

using namespace multilink;
using namespace multilink::optim;

TEST_SUITE("cobyla") {
  TEST_CASE("linear constraint, quadratic objective") {
    const auto fn = [](const VecX& x, Eigen::Ref<VecX> c) {
      c(0) = x(0) + x(1) - 1.0;
      return x.squaredNorm();
    };
    const CobylaResult r = cobyla_minimize(fn, VecX::Zero(2), 1, {0.5, 1e-8, 2000});
    CHECK(r.status == CobylaStatus::kConverged);
    CHECK(r.x(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.x(1) == doctest::Approx(0.5).epsilon(1e-6));
  }

  TEST_CASE("bilinear objective on the unit disk") {
    const auto fn = [](const VecX& x, Eigen::Ref<VecX> c) {
      c(0) = 1.0 - x.squaredNorm();
      return x(0) * x(1);
    };
    const CobylaResult r = cobyla_minimize(fn, (VecX(2) << 1.0, 1.0).finished(), 1, {0.5, 1e-8, 2000});
    CHECK(r.f == doctest::Approx(-0.5).epsilon(1e-6));
    CHECK(std::abs(r.x(0)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-5));
    CHECK(r.max_violation < 1e-7);
  }

  TEST_CASE("unconstrained Rosenbrock") {
    const auto fn = [](const VecX& x, Eigen::Ref<VecX>) {
      return 10.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
    };
    const CobylaResult r = cobyla_minimize(fn, (VecX(2) << -1.2, 1.0).finished(), 0, {0.5, 1e-8, 5000});
    CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-4));
  }

  TEST_CASE("Powell's problem 10: hexagon of maximum area") {
    // nine variables, fourteen constraints; optimum -sqrt(3)/2
    const auto fn = [](const VecX& x, Eigen::Ref<VecX> c) {
      c(0) = 1 - x(2) * x(2) - x(3) * x(3);
      c(1) = 1 - x(8) * x(8);
      c(2) = 1 - x(4) * x(4) - x(5) * x(5);
      c(3) = 1 - x(0) * x(0) - std::pow(x(1) - x(8), 2);
      c(4) = 1 - std::pow(x(0) - x(4), 2) - std::pow(x(1) - x(5), 2);
      c(5) = 1 - std::pow(x(0) - x(6), 2) - std::pow(x(1) - x(7), 2);
      c(6) = 1 - std::pow(x(2) - x(4), 2) - std::pow(x(3) - x(5), 2);
      c(7) = 1 - std::pow(x(2) - x(6), 2) - std::pow(x(3) - x(7), 2);
      c(8) = 1 - x(6) * x(6) - std::pow(x(7) - x(8), 2);
      c(9) = x(0) * x(3) - x(1) * x(2);
      c(10) = x(2) * x(8);
      c(11) = -x(4) * x(8);
      c(12) = x(4) * x(7) - x(5) * x(6);
      c(13) = x(8);
      return -0.5 * (x(0) * x(3) - x(1) * x(2) + x(2) * x(8) - x(4) * x(8) + x(4) * x(7) - x(5) * x(6));
    };
    const CobylaResult r = cobyla_minimize(fn, VecX::Ones(9), 14, {0.5, 1e-7, 10000});
    CHECK(r.f == doctest::Approx(-std::sqrt(3.0) / 2).epsilon(1e-5));
    CHECK(r.max_violation < 1e-6);
  }

  TEST_CASE("evaluation cap is reported") {
    const auto fn = [](const VecX& x, Eigen::Ref<VecX>) { return std::pow(x(0) - 3.0, 2) + std::pow(x(1) + 1.0, 2); };
    const CobylaResult r = cobyla_minimize(fn, VecX::Zero(2), 0, {0.5, 1e-10, 8});
    CHECK(r.status == CobylaStatus::kMaxEvaluations);
    CHECK(r.evaluations == 8);
  }
}
