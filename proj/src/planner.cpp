#include "multilink/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "multilink/cobyla.hpp"
#include "multilink/errors.hpp"

namespace multilink {

namespace {

constexpr double kInvalidPenalty = 1e6;

std::vector<int> free_indices(const VectoringSearch& search, int n) {
  std::vector<int> idx;
  for (int i = 0; i < n; ++i) {
    if (search.free_mask.empty() || search.free_mask[i]) idx.push_back(i);
  }
  return idx;
}

double angular_distance_inf(const VecX& a, const VecX& b) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) d = std::max(d, std::abs(wrap_angle(a(i) - b(i))));
  return d;
}

struct Candidate {
  VecX psi;  // unwrapped
  ObjectiveTerms terms;
  double violation = std::numeric_limits<double>::infinity();
  bool stalled = false;
  int evaluations = 0;
};

double alpha_violation(const ObjectiveTerms& t, const PlanConstraints& c) {
  if (!t.valid) return std::numeric_limits<double>::infinity();
  double v = 0.0;
  for (double a : {t.alpha_x, t.alpha_y}) v = std::max({v, c.alpha_min - a, a - c.alpha_max});
  return v;
}

// a strictly preferred over b
bool better(const Candidate& a, const Candidate& b, double tol, const std::optional<VecX>& warm) {
  const bool fa = a.violation <= tol, fb = b.violation <= tol;
  if (fa != fb) return fa;
  if (!fa) return a.violation < b.violation;
  const double scale = 1e-9 * (1.0 + std::abs(b.terms.value));
  if (a.terms.value > b.terms.value + scale) return true;
  if (a.terms.value < b.terms.value - scale) return false;
  if (warm) {
    const double da = angular_distance_inf(a.psi, *warm), db = angular_distance_inf(b.psi, *warm);
    if (da != db) return da < db;
  }
  const VecX wa = wrap_angles(a.psi), wb = wrap_angles(b.psi);
  return std::lexicographical_compare(wa.begin(), wa.end(), wb.begin(), wb.end());
}

Candidate local_solve(const RobotModel& model, const VecX& q, const PlanWeights& weights, const PlanConstraints& c,
                      const VecX& start, const std::vector<int>& idx, const std::optional<VecX>& warm, double rho) {
  const int nf = static_cast<int>(idx.size());
  const int n_con = 4 + (warm ? 2 * nf : 0);
  auto expand = [&](const VecX& z) {
    VecX psi = start;
    for (int k = 0; k < nf; ++k) psi(idx[k]) = z(k);
    return psi;
  };
  auto fn = [&](const VecX& z, Eigen::Ref<VecX> con) {
    const ObjectiveTerms t = vectoring_objective(model, q, expand(z), weights);
    if (!t.valid) {
      con.setConstant(-1.0);
      return kInvalidPenalty;
    }
    con(0) = t.alpha_x - c.alpha_min;
    con(1) = c.alpha_max - t.alpha_x;
    con(2) = t.alpha_y - c.alpha_min;
    con(3) = c.alpha_max - t.alpha_y;
    if (warm) {
      for (int k = 0; k < nf; ++k) {
        const double w = (*warm)(idx[k]);
        con(4 + 2 * k) = z(k) - (w - c.delta_psi);
        con(5 + 2 * k) = (w + c.delta_psi) - z(k);
      }
    }
    return -t.value;
  };

  VecX z0(nf);
  for (int k = 0; k < nf; ++k) z0(k) = start(idx[k]);
  optim::CobylaOptions opts;
  opts.rho_begin = rho;
  opts.rho_end = std::min(rho, 1e-5);
  opts.max_evaluations = c.max_iterations;
  const optim::CobylaResult r = optim::cobyla_minimize(fn, z0, n_con, opts, c.tolerance);

  VecX z = r.x;
  if (warm) {
    for (int k = 0; k < nf; ++k) {
      const double w = (*warm)(idx[k]);
      z(k) = std::clamp(z(k), w - c.delta_psi, w + c.delta_psi);
    }
  }
  Candidate out;
  out.psi = expand(z);
  out.terms = vectoring_objective(model, q, out.psi, weights);
  out.violation = alpha_violation(out.terms, c);
  out.stalled = r.status == optim::CobylaStatus::kMaxEvaluations;
  out.evaluations = r.evaluations;
  return out;
}

PlanResult to_result(const Candidate& best, const PlanConstraints& c, const std::optional<VecX>& warm, int evaluations) {
  if (best.violation > c.tolerance) {
    std::ostringstream msg;
    msg << "no vectoring angles satisfy the alpha bounds (violation " << best.violation << " rad)";
    if (best.stalled) throw OptimizerStalled(msg.str());
    throw Infeasible(msg.str());
  }
  PlanResult r;
  r.psi_bar = wrap_angles(best.psi);
  r.objective = best.terms.value;
  r.tau_min = best.terms.tau_min;
  r.lambda_s = best.terms.lambda_s;
  r.alpha_x = best.terms.alpha_x;
  r.alpha_y = best.terms.alpha_y;
  r.max_violation = best.violation;
  r.iterations = evaluations;
  r.feasible = (best.terms.lambda_s.array() > 0.0).all();
  const double edge = 1e-6;
  for (double a : {r.alpha_x, r.alpha_y}) {
    if (a <= c.alpha_min + c.tolerance || a >= c.alpha_max - c.tolerance) r.alpha_active = true;
  }
  if (warm) r.box_active = angular_distance_inf(best.psi, *warm) >= c.delta_psi - edge;
  return r;
}

}  // namespace

ObjectiveTerms vectoring_objective(const RobotModel& model, const VecX& q, const VecX& psi, const PlanWeights& weights) {
  ObjectiveTerms t;
  FormState form;
  try {
    form = evaluate_form(model, Configuration{q, psi});
  } catch (const SingularAllocation&) {
    return t;
  } catch (const ZeroForce&) {
    return t;
  }
  t.valid = true;
  t.tau_min = tau_min(torque_basis(form.alloc, model.lambda_max)).tau_min;
  t.lambda_s = form.alloc.lambda_s;
  t.lambda_norm = t.lambda_s.norm();
  const double mean = t.lambda_s.mean();
  t.variance = std::max((t.lambda_s.array() - mean).square().mean(), weights.variance_floor);
  t.alpha_x = form.alloc.alpha_x;
  t.alpha_y = form.alloc.alpha_y;
  t.value = weights.w1 * t.tau_min + weights.w2 / t.lambda_norm + weights.w3 / t.variance;
  return t;
}

PlanResult optimize_vectoring(const RobotModel& model, const VecX& q, const PlanWeights& weights,
                              const PlanConstraints& constraints, const VectoringSearch& search) {
  const int n = model.n_links;
  if (q.size() != model.n_joints()) throw DimensionMismatch("joint vector does not match the model");
  if (!Configuration{q, VecX::Zero(n)}.within_joint_limits(1e-9)) throw Infeasible("joint angles outside [-pi/2, pi/2]");
  if (!search.free_mask.empty() && static_cast<int>(search.free_mask.size()) != n)
    throw DimensionMismatch("free mask does not match the rotor count");
  if (search.warm_start && search.warm_start->size() != n) throw DimensionMismatch("warm start does not match the rotor count");

  const std::vector<int> idx = free_indices(search, n);
  if (idx.empty()) throw DimensionMismatch("no free vectoring angle");
  const VecX base = search.base.size() == n ? search.base : VecX::Zero(n);

  if (search.warm_start) {
    const VecX& warm = *search.warm_start;
    VecX start = base;
    for (int i : idx) start(i) = warm(i);
    const double rho = std::min(search.rho_begin, 0.5 * constraints.delta_psi);
    const Candidate c = local_solve(model, q, weights, constraints, start, idx, warm, rho);
    return to_result(c, constraints, warm, c.evaluations);
  }

  // Lattice of seeds over the free angles, then the dual of the best.
  const int nf = static_cast<int>(idx.size());
  const int per_axis = std::max(2, static_cast<int>(std::lround(std::pow(16.0, 1.0 / nf))));
  int n_seeds = 1;
  for (int k = 0; k < nf; ++k) n_seeds *= per_axis;

  Candidate best;
  int evaluations = 0;
  bool have = false;
  auto consider = [&](const Candidate& c) {
    evaluations += c.evaluations;
    if (!have || better(c, best, constraints.tolerance, std::nullopt)) {
      best = c;
      have = true;
    }
  };
  for (int s = 0; s < n_seeds; ++s) {
    VecX seed = base;
    int code = s;
    for (int k = 0; k < nf; ++k) {
      const int j = code % per_axis;
      code /= per_axis;
      seed(idx[k]) = base(idx[k]) - kPi + 2.0 * kPi * (j + 1) / per_axis;
    }
    consider(local_solve(model, q, weights, constraints, seed, idx, std::nullopt, search.rho_begin));
  }
  VecX dual = best.psi;
  for (int i : idx) dual(i) = best.psi(i) + kPi;
  consider(local_solve(model, q, weights, constraints, dual, idx, std::nullopt, search.rho_begin));
  return to_result(best, constraints, std::nullopt, evaluations);
}

PlanResult optimize_vectoring(const RobotModel& model, const VecX& q, const PlanWeights& weights,
                              const PlanConstraints& constraints, const std::optional<VecX>& warm_start) {
  VectoringSearch search;
  search.warm_start = warm_start;
  return optimize_vectoring(model, q, weights, constraints, search);
}

VecX dual_solution(const VecX& psi_bar) { return wrap_angles(psi_bar.array() + kPi); }

CornerReport detect_corner_case(const RobotModel& model, const VecX& q, const PlanWeights& weights,
                                const PlanConstraints& constraints, double threshold) {
  const PlanResult primal = optimize_vectoring(model, q, weights, constraints);
  CornerReport r;
  r.psi_bar = primal.psi_bar;
  r.tau_primal = primal.tau_min;
  const ObjectiveTerms dual = vectoring_objective(model, q, dual_solution(primal.psi_bar), weights);
  r.tau_dual = dual.valid ? dual.tau_min : 0.0;
  r.is_corner = r.tau_primal > threshold && r.tau_dual < 0.05 * r.tau_primal;
  return r;
}

PlanTrace plan_deformation(const RobotModel& model, const JointSchedule& schedule, const PlanWeights& weights,
                           const PlanConstraints& constraints, const DeformationOptions& options) {
  PlanTrace trace;
  std::optional<VecX> warm = options.initial_psi;
  bool first = true;
  double tau0 = 0.0;
  double t_prev = -std::numeric_limits<double>::infinity();
  for (const auto& [t, q] : schedule) {
    if (t < t_prev) throw DimensionMismatch("joint schedule is not time-ordered");
    t_prev = t;
    if (!trace.steps.empty() && q.size() == trace.steps.back().q.size() &&
        (q - trace.steps.back().q).cwiseAbs().maxCoeff() == 0.0) {
      PlanStep held = trace.steps.back();
      held.t = t;
      trace.steps.push_back(std::move(held));
      continue;
    }
    PlanStep step;
    step.t = t;
    step.q = q;
    step.warm_started = warm.has_value();
    try {
      step.result = optimize_vectoring(model, q, weights, constraints, warm);
    } catch (const Infeasible& e) {
      throw PlanBreak(t, format_joints(q), e.what());
    } catch (const OptimizerStalled& e) {
      throw PlanBreak(t, format_joints(q), e.what());
    }
    if (!step.result.feasible) throw PlanBreak(t, format_joints(q), "static thrust is not strictly positive");
    if (first) tau0 = step.result.tau_min;
    first = false;
    if (step.result.tau_min < options.collapse_ratio * tau0) {
      trace.warnings.push_back({t, q, step.result.tau_min, tau0});
      if (options.break_on_collapse) {
        std::ostringstream msg;
        msg << "guaranteed torque collapsed to " << step.result.tau_min << " N m";
        throw PlanBreak(t, format_joints(q), msg.str());
      }
    }
    warm = step.result.psi_bar;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

BranchChoice choose_branch(const RobotModel& model, const JointSchedule& schedule, const PlanWeights& weights,
                           const PlanConstraints& constraints) {
  if (schedule.empty()) throw DimensionMismatch("empty joint schedule");
  const PlanResult global = optimize_vectoring(model, schedule.front().second, weights, constraints);
  BranchChoice best{global.psi_bar, false, -1.0, true};
  for (const bool dual : {false, true}) {
    DeformationOptions opts;
    opts.collapse_ratio = 0.0;
    opts.initial_psi = dual ? dual_solution(global.psi_bar) : global.psi_bar;
    double worst = 0.0;
    try {
      const PlanTrace trace = plan_deformation(model, schedule, weights, constraints, opts);
      worst = std::numeric_limits<double>::infinity();
      for (const PlanStep& s : trace.steps) worst = std::min(worst, s.result.tau_min);
    } catch (const PlanBreak&) {
      continue;
    }
    if (worst > best.min_tau) best = {*opts.initial_psi, dual, worst, false};
  }
  if (best.broke) best.min_tau = 0.0;
  return best;
}

JointSchedule linear_schedule(const VecX& q_from, const VecX& q_to, double joint_speed, double rate_hz, double t0) {
  if (q_from.size() != q_to.size()) throw DimensionMismatch("schedule endpoints differ in size");
  if (joint_speed <= 0.0 || rate_hz <= 0.0) throw DimensionMismatch("joint speed and rate must be positive");
  const double span = (q_to - q_from).cwiseAbs().maxCoeff();
  const double duration = span / joint_speed;
  const int steps = static_cast<int>(std::ceil(duration * rate_hz - 1e-9));
  JointSchedule out;
  for (int k = 0; k <= steps; ++k) {
    const double t = k / rate_hz;
    const double s = duration > 0.0 ? std::min(1.0, t / duration) : 1.0;
    out.emplace_back(t0 + t, q_from + s * (q_to - q_from));
  }
  return out;
}

double design_tilt_angle(double gamma1, double gamma2, double l, double d) {
  if (!(gamma1 > 1.0) || !(gamma2 > 0.0) || !(l > 0.0) || !(d > 0.0))
    throw InfeasibleDesign("design needs gamma1 > 1 and positive gamma2, l, d");
  const double arg = gamma2 * l / (4.0 * d);
  if (arg > 1.0) throw InfeasibleDesign("torque requirement exceeds what any tilt can give");
  const double beta = std::asin(arg);
  if (beta > std::acos(1.0 / gamma1)) throw InfeasibleDesign("thrust-efficiency and torque bounds conflict");
  return beta;
}

std::string format_joints(const VecX& q) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << '[';
  for (Eigen::Index i = 0; i < q.size(); ++i) os << (i ? ", " : "") << q(i);
  os << ']';
  return os.str();
}

}  // namespace multilink
