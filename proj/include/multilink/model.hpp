#pragma once

#include <vector>

#include "multilink/math.hpp"

namespace multilink {

/// Physical parameters of a planar multilinked robot. Immutable once validated.
///
/// Each link is a uniform rod of length `link_length` lying on its x axis, with a
/// battery point mass hung `battery_drop` below the rod midpoint. The rotor mount
/// sits at the rod midpoint, `rotor_height` above the rod axis, yawed by the
/// vectoring angle and tilted by `tilt_beta`.
struct RobotModel {
  int n_links = 4;
  std::vector<double> link_mass;   // kg
  double link_length = 0.6;        // m
  double tilt_beta = 0.34;         // rad
  std::vector<double> drag_ratio;  // m, signed per spin direction
  double lambda_max = 26.24;       // N
  double rotor_height = 0.05;      // m
  double battery_ratio = 0.25;     // fraction of link mass in the battery
  double battery_drop = 0.2;       // m below the rod axis
  double gravity = 9.80665;        // m/s^2

  double total_mass() const;
  /// Height of the link center of mass relative to the rod axis (negative: below).
  double link_com_height() const;
  /// Nominal vertical distance from the CoG to the propeller plane.
  double cog_to_propeller() const;
  int n_joints() const { return n_links - 1; }

  /// Throws InvalidModel when an invariant is broken.
  void validate() const;
};

/// Quad-type reference robot: N=4, l=0.6 m, 4.7 kg split evenly, beta=0.34 rad.
RobotModel default_quad_model();

/// Joint angles (N-1) and vectoring angles (N).
struct Configuration {
  VecX q;
  VecX psi;

  /// Throws DimensionMismatch when sizes do not fit the model.
  void check_dimensions(const RobotModel& model) const;
  /// Joint limits [-pi/2, pi/2].
  bool within_joint_limits(double slack = 1e-12) const;
};

struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose operator*(const Pose& o) const { return {rotation * o.rotation, rotation * o.translation + translation}; }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// All poses expressed in the root link frame {L1}.
struct FrameSet {
  std::vector<Pose> links;
  std::vector<Vec3> link_com;
  std::vector<Pose> rotors;
};

struct InertiaSummary {
  double total_mass = 0.0;
  Vec3 cog_origin = Vec3::Zero();     // in {L1}
  Mat3 inertia = Mat3::Identity();    // about the CoG, axes of {L1} (= frame {C})
};

FrameSet forward_kinematics(const RobotModel& model, const Configuration& config);

/// Rotational inertia of a single link about its own center of mass, in its link frame.
Mat3 link_inertia(const RobotModel& model, int link);

InertiaSummary aggregate_inertia(const RobotModel& model, const FrameSet& frames);

}  // namespace multilink
