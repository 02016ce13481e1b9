#pragma once

#include "multilink/model.hpp"

namespace multilink {

/// Unit-thrust wrench directions, one column per rotor.
struct WrenchBasis {
  Mat3X force;   // Qt
  Mat3X torque;  // Qr
};

struct StaticThrust {
  VecX unit_solution;  // lambda' (1 N along the candidate z axis)
  VecX lambda_s;       // N
};

struct CogOrientation {
  double alpha_x = 0.0;
  double alpha_y = 0.0;
  Mat3 rotation = Mat3::Identity();  // {CoG}R{C} = Ry(alpha_y) Rx(alpha_x)
};

/// Hover allocation expressed in the CoG frame.
struct AllocationBundle {
  Mat3X Qt;
  Mat3X Qr;
  Mat3X Qt_c;  // same matrices before rotation, in the candidate frame {C}
  Mat3X Qr_c;
  VecX lambda_s;
  double alpha_x = 0.0;
  double alpha_y = 0.0;
  Mat3 R_cog_c = Mat3::Identity();
  /// False when some static thrust entry is not strictly positive.
  bool feasible = true;
};

/// Columns R_i b3 and (p_i^ + kappa_i I) R_i b3 in {C}: orientation of {L1}, origin at the CoG.
WrenchBasis rotor_wrench_basis(const FrameSet& frames, const RobotModel& model, const InertiaSummary& cog);

/// Solves [Qt'_z; Qr'] lambda' = e1 (minimum norm for N > 4) and rescales to balance gravity.
/// Throws SingularAllocation when the stacked system loses rank.
StaticThrust solve_static_thrust(const WrenchBasis& basis_c, const RobotModel& model);

/// Roll/pitch that rotate the hover force f onto +z. Throws ZeroForce for |f| < 1e-12.
CogOrientation cog_orientation(const Vec3& f);

AllocationBundle allocation_in_cog(const WrenchBasis& basis_c, const StaticThrust& thrust, const CogOrientation& orientation);

/// Everything the rest of the library needs about one (q, psi).
struct FormState {
  FrameSet frames;
  InertiaSummary inertia;
  AllocationBundle alloc;
  Mat3 inertia_cog = Mat3::Identity();  // I_sigma expressed in {CoG}
};

/// FK, inertia, allocation and CoG orientation in one call.
FormState evaluate_form(const RobotModel& model, const Configuration& config);

}  // namespace multilink
