#pragma once

#include <functional>

#include "multilink/math.hpp"

namespace multilink::optim {

/// Constrained Optimization BY Linear Approximations (Powell, 1994).
///
/// Minimizes f(x) subject to c_k(x) >= 0 using linear interpolation models built
/// on a simplex of n+1 points and a trust region of radius rho, shrunk from
/// rho_begin to rho_end.
struct CobylaOptions {
  double rho_begin = 0.5;
  double rho_end = 1e-4;
  int max_evaluations = 2000;
};

enum class CobylaStatus { kConverged, kMaxEvaluations, kRoundingErrors };

struct CobylaResult {
  VecX x;
  double f = 0.0;
  double max_violation = 0.0;
  int evaluations = 0;
  CobylaStatus status = CobylaStatus::kConverged;
};

/// Returns f(x) and writes the constraint values into `con` (size = n_constraints).
using CobylaFunction = std::function<double(const VecX& x, Eigen::Ref<VecX> con)>;

/// Result is the best point seen: least violation until feasible (within
/// `feasibility_tol`), then least objective among feasible points.
CobylaResult cobyla_minimize(const CobylaFunction& fn, const VecX& x0, int n_constraints, const CobylaOptions& options,
                             double feasibility_tol = 0.0);

}  // namespace multilink::optim
