#include "multilink/feasibility.hpp"

#include <algorithm>
#include <limits>

#include "multilink/errors.hpp"

namespace multilink {

std::string_view to_string(SingularClass c) {
  switch (c) {
    case SingularClass::kS1:
      return "S1";
    case SingularClass::kS2:
      return "S2";
    case SingularClass::kBoth:
      return "both";
    case SingularClass::kNone:
      break;
  }
  return "none";
}

TorqueBasis torque_basis(const AllocationBundle& alloc, double lambda_max) {
  TorqueBasis b;
  b.lambda_max = lambda_max;
  b.v.reserve(alloc.Qr_c.cols());
  for (Eigen::Index i = 0; i < alloc.Qr_c.cols(); ++i) b.v.push_back(alloc.Qr_c.col(i));
  return b;
}

TorqueBasis torque_basis(const WrenchBasis& basis_c, double lambda_max) {
  TorqueBasis b;
  b.lambda_max = lambda_max;
  for (Eigen::Index i = 0; i < basis_c.torque.cols(); ++i) b.v.push_back(basis_c.torque.col(i));
  return b;
}

TorqueBasis torque_basis(const RobotModel& model, const Configuration& config) {
  config.check_dimensions(model);
  const FrameSet frames = forward_kinematics(model, config);
  return torque_basis(rotor_wrench_basis(frames, model, aggregate_inertia(model, frames)), model.lambda_max);
}

FeasibilityReport tau_min(const TorqueBasis& basis) {
  const int n = static_cast<int>(basis.v.size());
  if (n < 3) throw DimensionMismatch("tau_min needs at least 3 rotors");

  FeasibilityReport report;
  report.face_distances.reserve(n * (n - 1));
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec3 cross = basis.v[i].cross(basis.v[j]);
      const double cn = cross.norm();
      if (cn < 1e-9 * basis.v[i].norm() * basis.v[j].norm() || cn == 0.0) {
        report.degenerate_pairs.emplace_back(i, j);
        continue;
      }
      const Vec3 normal = cross / cn;
      double dist = 0.0;
      for (int k = 0; k < n; ++k) dist += std::max(0.0, basis.lambda_max * normal.dot(basis.v[k]));
      report.face_distances.push_back({i, j, dist});
      best = std::min(best, dist);
    }
  }
  if (report.face_distances.empty()) {
    report.all_degenerate = true;
    report.tau_min = 0.0;
  } else {
    report.tau_min = best;
  }
  return report;
}

SingularClass detect_singular_class(const VecX& q, double tol) {
  if (q.size() != 3) throw DimensionMismatch("singular classes are defined for 3 joints");
  const bool s1 = std::abs(q(0) + q(2)) <= tol && std::abs(q(1)) <= tol;
  const bool s2 = std::abs(q(0) + q(1)) <= tol && std::abs(q(1) + q(2)) <= tol;
  if (s1 && s2) return SingularClass::kBoth;
  if (s1) return SingularClass::kS1;
  if (s2) return SingularClass::kS2;
  return SingularClass::kNone;
}

FeasibilityReport assess_form(const RobotModel& model, const Configuration& config) {
  FeasibilityReport r = tau_min(torque_basis(model, config));
  if (config.q.size() == 3) r.singular_class = detect_singular_class(config.q);
  return r;
}

std::vector<Vec3> zonotope_vertices(const TorqueBasis& basis) {
  // Every vertex lies on a facet; facet (i, j) with outward normal n holds the
  // corners where lambda_k = lambda_max for n.v_k > 0 and lambda_i, lambda_j free.
  const int n = static_cast<int>(basis.v.size());
  std::vector<Vec3> out;
  auto push_unique = [&out](const Vec3& p) {
    for (const Vec3& o : out) {
      if ((o - p).norm() < 1e-9 * (1.0 + p.norm())) return;
    }
    out.push_back(p);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec3 normal = basis.v[i].cross(basis.v[j]);
      if (normal.norm() < 1e-9 * basis.v[i].norm() * basis.v[j].norm()) continue;
      Vec3 base = Vec3::Zero();
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        if (normal.dot(basis.v[k]) > 0.0) base += basis.lambda_max * basis.v[k];
      }
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) push_unique(base + a * basis.lambda_max * basis.v[i] + b * basis.lambda_max * basis.v[j]);
      }
    }
  }
  return out;
}

}  // namespace multilink
