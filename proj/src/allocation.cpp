#include "multilink/allocation.hpp"

#include "multilink/errors.hpp"

namespace multilink {

WrenchBasis rotor_wrench_basis(const FrameSet& frames, const RobotModel& model, const InertiaSummary& cog) {
  const int n = model.n_links;
  WrenchBasis basis{Mat3X(3, n), Mat3X(3, n)};
  for (int i = 0; i < n; ++i) {
    const Vec3 dir = frames.rotors[i].rotation.col(2);
    const Vec3 p = frames.rotors[i].translation - cog.cog_origin;
    basis.force.col(i) = dir;
    basis.torque.col(i) = (skew(p) + model.drag_ratio[i] * Mat3::Identity()) * dir;
  }
  return basis;
}

StaticThrust solve_static_thrust(const WrenchBasis& basis_c, const RobotModel& model) {
  const Eigen::Index n = basis_c.force.cols();
  if (n < 4) throw SingularAllocation("static thrust needs at least 4 rotors");

  MatX stacked(4, n);
  stacked.row(0) = basis_c.force.row(2);
  stacked.bottomRows(3) = basis_c.torque;

  Eigen::JacobiSVD<MatX> svd(stacked, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) < 1e-8 * sv(0)) throw SingularAllocation("hover allocation is rank deficient");

  const Eigen::Vector4d rhs(1.0, 0.0, 0.0, 0.0);
  StaticThrust out;
  if (n == 4) {
    out.unit_solution = stacked.partialPivLu().solve(rhs);
  } else {
    out.unit_solution = svd.solve(rhs);
  }
  const double norm = (basis_c.force * out.unit_solution).norm();
  out.lambda_s = (model.total_mass() * model.gravity / norm) * out.unit_solution;
  return out;
}

CogOrientation cog_orientation(const Vec3& f) {
  if (f.norm() < 1e-12) throw ZeroForce("hover force vanishes");
  CogOrientation o;
  o.alpha_x = std::atan2(f.y(), f.z());
  o.alpha_y = std::atan2(-f.x(), std::hypot(f.y(), f.z()));
  o.rotation = rot_y(o.alpha_y) * rot_x(o.alpha_x);
  return o;
}

AllocationBundle allocation_in_cog(const WrenchBasis& basis_c, const StaticThrust& thrust, const CogOrientation& orientation) {
  AllocationBundle b;
  b.Qt_c = basis_c.force;
  b.Qr_c = basis_c.torque;
  b.Qt = orientation.rotation * basis_c.force;
  b.Qr = orientation.rotation * basis_c.torque;
  b.lambda_s = thrust.lambda_s;
  b.alpha_x = orientation.alpha_x;
  b.alpha_y = orientation.alpha_y;
  b.R_cog_c = orientation.rotation;
  b.feasible = (thrust.lambda_s.array() > 0.0).all();
  return b;
}

FormState evaluate_form(const RobotModel& model, const Configuration& config) {
  FormState s;
  s.frames = forward_kinematics(model, config);
  s.inertia = aggregate_inertia(model, s.frames);
  const WrenchBasis basis = rotor_wrench_basis(s.frames, model, s.inertia);
  const StaticThrust thrust = solve_static_thrust(basis, model);
  const CogOrientation orient = cog_orientation(basis.force * thrust.lambda_s);
  s.alloc = allocation_in_cog(basis, thrust, orient);
  s.inertia_cog = orient.rotation * s.inertia.inertia * orient.rotation.transpose();
  return s;
}

}  // namespace multilink
