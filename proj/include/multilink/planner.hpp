#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "multilink/feasibility.hpp"

namespace multilink {

struct PlanWeights {
  double w1 = 1.0;   // guaranteed torque
  double w2 = 2.0;   // thrust norm
  double w3 = 0.01;  // thrust spread
  double variance_floor = 0.3;  // N^2
};

struct PlanConstraints {
  double alpha_min = -0.01;  // rad, applies to both alpha_x and alpha_y
  double alpha_max = 0.01;
  double delta_psi = 0.2;    // rad per planning step, only with a warm start
  double tolerance = 1e-4;   // rad
  int max_iterations = 2000; // objective evaluations per local solve
};

/// Which vectoring angles the optimizer may move. Pinned entries keep `base`.
struct VectoringSearch {
  std::optional<VecX> warm_start;
  std::vector<bool> free_mask;  // empty: all free
  VecX base;                    // values of pinned entries (and global seed offset)
  double rho_begin = 1.0;       // initial trust radius, rad
};

struct PlanResult {
  VecX psi_bar;
  double objective = 0.0;
  double tau_min = 0.0;
  VecX lambda_s;
  double alpha_x = 0.0;
  double alpha_y = 0.0;
  bool feasible = false;
  int iterations = 0;
  double max_violation = 0.0;
  bool box_active = false;    // some psi sits on its +-delta_psi bound
  bool alpha_active = false;  // some alpha sits on its bound
};

/// Individual terms of the planning objective at one (q, psi).
struct ObjectiveTerms {
  bool valid = false;  // allocation solvable
  double tau_min = 0.0;
  double lambda_norm = 0.0;
  double variance = 0.0;  // population variance, floored
  double alpha_x = 0.0;
  double alpha_y = 0.0;
  VecX lambda_s;
  double value = 0.0;
};

ObjectiveTerms vectoring_objective(const RobotModel& model, const VecX& q, const VecX& psi, const PlanWeights& weights);

/// Best local maximizer of w1 tau_min + w2/|lambda_s| + w3/var(lambda_s) under the
/// alpha bounds. Without a warm start a multi-start global search is run; with one,
/// psi stays within +-delta_psi of it.
PlanResult optimize_vectoring(const RobotModel& model, const VecX& q, const PlanWeights& weights,
                              const PlanConstraints& constraints, const VectoringSearch& search);

PlanResult optimize_vectoring(const RobotModel& model, const VecX& q, const PlanWeights& weights,
                              const PlanConstraints& constraints, const std::optional<VecX>& warm_start = std::nullopt);

/// psi + pi, wrapped.
VecX dual_solution(const VecX& psi_bar);

struct CornerReport {
  bool is_corner = false;
  double tau_primal = 0.0;
  double tau_dual = 0.0;
  VecX psi_bar;
};

CornerReport detect_corner_case(const RobotModel& model, const VecX& q, const PlanWeights& weights,
                                const PlanConstraints& constraints, double threshold = 1e-3);

struct PlanStep {
  double t = 0.0;
  VecX q;
  PlanResult result;
  bool warm_started = false;
};

struct CollapseWarning {
  double t = 0.0;
  VecX q;
  double tau_min = 0.0;
  double tau_initial = 0.0;
};

struct PlanTrace {
  std::vector<PlanStep> steps;
  std::vector<CollapseWarning> warnings;
};

struct DeformationOptions {
  /// Warn when tau_min falls below this fraction of the initial form's value.
  double collapse_ratio = 0.05;
  bool break_on_collapse = false;
  /// Start from these angles (step-bounded) instead of a global solve.
  std::optional<VecX> initial_psi;
};

using JointSchedule = std::vector<std::pair<double, VecX>>;

struct BranchChoice {
  VecX initial_psi;
  bool dual = false;       // the psi + pi branch won
  double min_tau = 0.0;    // over the winning trace; 0 if both break
  bool broke = false;      // both branches hit a PlanBreak
};

/// Plans the schedule from the global solution at its first form and from its dual,
/// and keeps the branch with the larger worst-case tau_min.
BranchChoice choose_branch(const RobotModel& model, const JointSchedule& schedule, const PlanWeights& weights,
                           const PlanConstraints& constraints);

/// Global solve at the first entry, then warm-started solves. Throws PlanBreak at
/// the first infeasible step (or collapse, if requested).
PlanTrace plan_deformation(const RobotModel& model, const JointSchedule& schedule, const PlanWeights& weights,
                           const PlanConstraints& constraints, const DeformationOptions& options = {});

/// Linear joint interpolation between two forms at a fixed joint rate, sampled at `rate_hz`.
JointSchedule linear_schedule(const VecX& q_from, const VecX& q_to, double joint_speed, double rate_hz,
                              double t0 = 0.0);

/// Smallest beta with 1/cos(beta) <= gamma1 and 4 sin(beta) d / l >= gamma2.
double design_tilt_angle(double gamma1, double gamma2, double l, double d);

std::string format_joints(const VecX& q);

}  // namespace multilink
