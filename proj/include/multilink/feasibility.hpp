#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "multilink/allocation.hpp"

namespace multilink {

/// Torque generated per newton of thrust by each rotor, in {C}.
struct TorqueBasis {
  std::vector<Vec3> v;
  double lambda_max = 0.0;
};

enum class SingularClass { kNone, kS1, kS2, kBoth };

std::string_view to_string(SingularClass c);

struct FaceDistance {
  int i = 0;
  int j = 0;
  double distance = 0.0;
};

struct FeasibilityReport {
  double tau_min = 0.0;
  std::vector<FaceDistance> face_distances;
  std::vector<std::pair<int, int>> degenerate_pairs;
  SingularClass singular_class = SingularClass::kNone;
  /// Every pair was degenerate; tau_min was forced to zero.
  bool all_degenerate = false;
};

TorqueBasis torque_basis(const AllocationBundle& alloc, double lambda_max);
TorqueBasis torque_basis(const WrenchBasis& basis_c, double lambda_max);
/// Straight from kinematics; needs no hover solution, so it works on singular forms.
TorqueBasis torque_basis(const RobotModel& model, const Configuration& config);

/// Radius of the largest origin-centred ball inside the torque zonotope
/// { sum lambda_i v_i : 0 <= lambda_i <= lambda_max }.
FeasibilityReport tau_min(const TorqueBasis& basis);

/// S1: q1 = -q3, q2 = 0.  S2: q1 = -q2 = q3 (rotors collinear). Quad-type only.
SingularClass detect_singular_class(const VecX& q, double tol = 1e-6);

/// tau_min of a configuration with its singular class filled in (class only for N=4).
FeasibilityReport assess_form(const RobotModel& model, const Configuration& config);

/// Vertices of the torque zonotope, deduplicated.
std::vector<Vec3> zonotope_vertices(const TorqueBasis& basis);

}  // namespace multilink
