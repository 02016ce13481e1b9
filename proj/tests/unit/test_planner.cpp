#include <doctest.h>

#include "multilink/errors.hpp"
#include "multilink/planner.hpp"

using namespace multilink;

namespace {

const VecX kNormal = VecX::Constant(3, kPi / 2);

}  // namespace

TEST_SUITE("planner") {
  TEST_CASE("objective terms") {
    const RobotModel m = default_quad_model();
    const PlanWeights w;
    const VecX psi = (VecX(4) << kPi, 0, kPi, 0).finished();
    const ObjectiveTerms t = vectoring_objective(m, kNormal, psi, w);
    REQUIRE(t.valid);
    const FormState s = evaluate_form(m, Configuration{kNormal, psi});
    CHECK(t.tau_min == doctest::Approx(tau_min(torque_basis(s.alloc, m.lambda_max)).tau_min).epsilon(1e-12));
    const double mean = s.alloc.lambda_s.mean();
    const double var = (s.alloc.lambda_s.array() - mean).square().mean();
    CHECK(t.variance == doctest::Approx(std::max(var, w.variance_floor)));
    CHECK(t.value == doctest::Approx(w.w1 * t.tau_min + w.w2 / s.alloc.lambda_s.norm() + w.w3 / t.variance));

    RobotModel flat = m;
    flat.tilt_beta = 0.0;
    CHECK_FALSE(vectoring_objective(flat, VecX::Zero(3), VecX::Zero(4), w).valid);
  }

  TEST_CASE("two free angles: optimizer beats a 0.05 rad grid") {
    const RobotModel m = default_quad_model();
    const PlanWeights w;
    PlanConstraints c;
    c.alpha_min = -0.3;
    c.alpha_max = 0.3;
    const VecX base = (VecX(4) << 0.0, 0.0, kPi, 0.0).finished();
    const VecX q = (VecX(3) << 1.2, 0.9, 1.4).finished();

    double grid_best = -1e300;
    for (double a = -kPi; a < kPi; a += 0.05) {
      for (double b = -kPi; b < kPi; b += 0.05) {
        VecX psi = base;
        psi(0) = a;
        psi(1) = b;
        const ObjectiveTerms t = vectoring_objective(m, q, psi, w);
        if (!t.valid || std::abs(t.alpha_x) > 0.3 || std::abs(t.alpha_y) > 0.3) continue;
        grid_best = std::max(grid_best, t.value);
      }
    }
    VectoringSearch s;
    s.free_mask = {true, true, false, false};
    s.base = base;
    const PlanResult r = optimize_vectoring(m, q, w, c, s);
    CHECK(r.psi_bar(2) == doctest::Approx(kPi));
    CHECK(r.psi_bar(3) == doctest::Approx(0.0));
    CHECK(r.objective >= grid_best - 1e-6);
    CHECK(r.objective <= grid_best + 0.05 * std::abs(grid_best));
  }

  TEST_CASE("plan respects its constraints and reports consistent tau_min") {
    const RobotModel m = default_quad_model();
    const PlanWeights w;
    const PlanConstraints c;
    for (const VecX& q : {kNormal, VecX((VecX(3) << -kPi / 2, 0, kPi / 2).finished()), VecX(VecX::Zero(3))}) {
      const PlanResult r = optimize_vectoring(m, q, w, c);
      CHECK(r.feasible);
      CHECK(r.alpha_x >= c.alpha_min - c.tolerance);
      CHECK(r.alpha_x <= c.alpha_max + c.tolerance);
      CHECK(r.alpha_y >= c.alpha_min - c.tolerance);
      CHECK(r.alpha_y <= c.alpha_max + c.tolerance);
      const FeasibilityReport f = assess_form(m, Configuration{q, r.psi_bar});
      CHECK(std::abs(f.tau_min - r.tau_min) < 1e-9);
      CHECK(r.tau_min > 0.0);
    }
  }

  TEST_CASE("warm re-run never loses objective and stays in the box") {
    const RobotModel m = default_quad_model();
    const PlanWeights w;
    const PlanConstraints c;
    const VecX q = (VecX(3) << 1.0, -0.4, 0.8).finished();
    const PlanResult first = optimize_vectoring(m, q, w, c);
    const PlanResult again = optimize_vectoring(m, q, w, c, first.psi_bar);
    CHECK(again.objective >= first.objective - 1e-9);
    CHECK((again.psi_bar - first.psi_bar).cwiseAbs().maxCoeff() <= c.delta_psi + 1e-12);

    const VecX shifted = (VecX(3) << 1.05, -0.4, 0.8).finished();
    const PlanResult next = optimize_vectoring(m, shifted, w, c, first.psi_bar);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(wrap_angle(next.psi_bar(i) - first.psi_bar(i))) <= c.delta_psi + 1e-12);
  }

  TEST_CASE("normal form: the dual keeps tau_min within 12%") {
    const RobotModel m = default_quad_model();
    const PlanWeights w;
    const PlanResult r = optimize_vectoring(m, kNormal, w, PlanConstraints{});
    const ObjectiveTerms dual = vectoring_objective(m, kNormal, dual_solution(r.psi_bar), w);
    REQUIRE(dual.valid);
    CHECK(dual.tau_min >= 0.88 * r.tau_min);
    CHECK(dual.tau_min <= 1.12 * r.tau_min);
    const VecX d = dual_solution((VecX(2) << 3.0, -0.5).finished());
    CHECK(d(0) == doctest::Approx(3.0 - kPi));
    CHECK(d(1) == doctest::Approx(kPi - 0.5));
  }

  TEST_CASE("corner case at q_i = 0.11") {
    const RobotModel m = default_quad_model();
    const CornerReport corner = detect_corner_case(m, VecX::Constant(3, 0.11), PlanWeights{}, PlanConstraints{});
    CHECK(corner.is_corner);
    CHECK(corner.tau_dual < 0.05 * corner.tau_primal);
    const CornerReport normal = detect_corner_case(m, kNormal, PlanWeights{}, PlanConstraints{});
    CHECK_FALSE(normal.is_corner);
  }

  TEST_CASE("linear schedule") {
    const JointSchedule s = linear_schedule(VecX::Constant(3, 0.11), VecX::Constant(3, -0.11), 0.25, 20.0);
    CHECK(s.size() == 19);
    CHECK(s.front().second(0) == doctest::Approx(0.11));
    CHECK(s.back().second(0) == doctest::Approx(-0.11));
    CHECK(s[1].first == doctest::Approx(0.05));
    CHECK(s[1].second(1) == doctest::Approx(0.11 - 0.0125));
    CHECK_THROWS_AS(linear_schedule(VecX::Zero(3), VecX::Zero(2), 0.25, 20), DimensionMismatch);
  }

  TEST_CASE("deformation traces respect the step bound") {
    const RobotModel m = default_quad_model();
    const PlanConstraints c;
    const JointSchedule s = linear_schedule(kNormal, VecX::Zero(3), 0.25, 20.0);
    DeformationOptions opts;
    opts.initial_psi = choose_branch(m, s, PlanWeights{}, c).initial_psi;
    const PlanTrace t = plan_deformation(m, s, PlanWeights{}, c, opts);
    REQUIRE(t.steps.size() == s.size());
    for (std::size_t k = 1; k < t.steps.size(); ++k) {
      for (int i = 0; i < 4; ++i)
        CHECK(std::abs(wrap_angle(t.steps[k].result.psi_bar(i) - t.steps[k - 1].result.psi_bar(i))) <= c.delta_psi + 1e-9);
      CHECK(t.steps[k].result.tau_min > 0.0);
    }
    CHECK(t.warnings.empty());
  }

  TEST_CASE("straight path through the corner collapses or breaks") {
    const RobotModel m = default_quad_model();
    const JointSchedule s = linear_schedule(VecX::Constant(3, 0.11), VecX::Constant(3, -0.11), 0.25, 20.0);
    bool flagged = false;
    try {
      const PlanTrace t = plan_deformation(m, s, PlanWeights{}, PlanConstraints{});
      flagged = !t.warnings.empty();
    } catch (const PlanBreak& e) {
      flagged = true;
      CHECK(e.joints().size() > 0);
    }
    CHECK(flagged);
    DeformationOptions strict;
    strict.break_on_collapse = true;
    CHECK_THROWS_AS(plan_deformation(m, s, PlanWeights{}, PlanConstraints{}, strict), PlanBreak);
  }

  TEST_CASE("tilt angle design") {
    CHECK(design_tilt_angle(1.05, 0.2, 0.6, 0.1) == doctest::Approx(std::asin(0.3)).epsilon(1e-12));
    CHECK_THROWS_AS(design_tilt_angle(1.0, 0.2, 0.6, 0.1), InfeasibleDesign);
    CHECK_THROWS_AS(design_tilt_angle(1.01, 0.2, 0.6, 0.1), InfeasibleDesign);
    CHECK_THROWS_AS(design_tilt_angle(1.5, 1.0, 0.6, 0.1), InfeasibleDesign);
  }

  TEST_CASE("bad inputs") {
    const RobotModel m = default_quad_model();
    CHECK_THROWS_AS(optimize_vectoring(m, VecX::Zero(2), PlanWeights{}, PlanConstraints{}), DimensionMismatch);
    CHECK_THROWS_AS(optimize_vectoring(m, VecX::Constant(3, 2.0), PlanWeights{}, PlanConstraints{}), Infeasible);
    PlanConstraints impossible;
    impossible.alpha_min = 1.2;
    impossible.alpha_max = 1.3;
    bool rejected = false;
    try {
      rejected = !optimize_vectoring(m, kNormal, PlanWeights{}, impossible).feasible;
    } catch (const Error&) {
      rejected = true;
    }
    CHECK(rejected);
  }
}
