#include "multilink/model.hpp"

#include <numeric>
#include <string>

#include "multilink/errors.hpp"

namespace multilink {

namespace {

Mat3 point_inertia(double mass, const Vec3& r) { return mass * (r.squaredNorm() * Mat3::Identity() - r * r.transpose()); }

}  // namespace

double RobotModel::total_mass() const { return std::accumulate(link_mass.begin(), link_mass.end(), 0.0); }

double RobotModel::link_com_height() const { return -battery_ratio * battery_drop; }

double RobotModel::cog_to_propeller() const { return rotor_height - link_com_height(); }

void RobotModel::validate() const {
  if (n_links < 2) throw InvalidModel("n_links must be >= 2");
  if (static_cast<int>(link_mass.size()) != n_links) throw InvalidModel("link_mass must have n_links entries");
  if (static_cast<int>(drag_ratio.size()) != n_links) throw InvalidModel("drag_ratio must have n_links entries");
  for (double m : link_mass) {
    if (!(m > 0.0)) throw InvalidModel("link masses must be positive");
  }
  if (!(link_length > 0.0)) throw InvalidModel("link_length must be positive");
  if (!(tilt_beta >= 0.0 && tilt_beta < kPi / 2)) throw InvalidModel("tilt_beta must lie in [0, pi/2)");
  if (!(lambda_max > 0.0)) throw InvalidModel("lambda_max must be positive");
  if (!(battery_ratio >= 0.0 && battery_ratio < 1.0)) throw InvalidModel("battery_ratio must lie in [0, 1)");
  if (!(gravity > 0.0)) throw InvalidModel("gravity must be positive");
  for (int i = 0; i + 1 < n_links; ++i) {
    if (drag_ratio[i] * drag_ratio[i + 1] > 0.0) {
      throw InvalidModel("drag_ratio signs must alternate between adjacent rotors (rotor " + std::to_string(i + 1) + ")");
    }
  }
}

RobotModel default_quad_model() {
  RobotModel m;
  m.n_links = 4;
  m.link_mass.assign(4, 4.7 / 4.0);
  m.drag_ratio = {-0.008, 0.008, -0.008, 0.008};
  return m;
}

void Configuration::check_dimensions(const RobotModel& model) const {
  if (q.size() != model.n_links - 1) {
    throw DimensionMismatch("expected " + std::to_string(model.n_links - 1) + " joint angles, got " +
                            std::to_string(q.size()));
  }
  if (psi.size() != model.n_links) {
    throw DimensionMismatch("expected " + std::to_string(model.n_links) + " vectoring angles, got " +
                            std::to_string(psi.size()));
  }
}

bool Configuration::within_joint_limits(double slack) const {
  return (q.array().abs() <= kPi / 2 + slack).all();
}

FrameSet forward_kinematics(const RobotModel& model, const Configuration& config) {
  config.check_dimensions(model);
  const int n = model.n_links;
  const double l = model.link_length;

  FrameSet out;
  out.links.reserve(n);
  out.link_com.reserve(n);
  out.rotors.reserve(n);

  Pose link;
  const Pose tilt{rot_y(model.tilt_beta), Vec3::Zero()};
  for (int i = 0; i < n; ++i) {
    if (i > 0) link = link * Pose{rot_z(config.q(i - 1)), Vec3(l, 0.0, 0.0)};
    out.links.push_back(link);
    out.link_com.push_back(link.apply(Vec3(0.5 * l, 0.0, model.link_com_height())));
    const Pose mount{rot_z(config.psi(i)), Vec3(0.5 * l, 0.0, model.rotor_height)};
    out.rotors.push_back(link * mount * tilt);
  }
  return out;
}

Mat3 link_inertia(const RobotModel& model, int link) {
  const double m = model.link_mass.at(link);
  const double m_rod = (1.0 - model.battery_ratio) * m;
  const double m_bat = model.battery_ratio * m;
  const double l = model.link_length;
  const double zc = model.link_com_height();

  Mat3 rod = Mat3::Zero();
  rod(1, 1) = rod(2, 2) = m_rod * l * l / 12.0;
  // rod center sits at z=0, battery at z=-drop; both relative to the link COM height zc
  return rod + point_inertia(m_rod, Vec3(0.0, 0.0, -zc)) + point_inertia(m_bat, Vec3(0.0, 0.0, -model.battery_drop - zc));
}

InertiaSummary aggregate_inertia(const RobotModel& model, const FrameSet& frames) {
  InertiaSummary s;
  s.total_mass = model.total_mass();
  Vec3 weighted = Vec3::Zero();
  for (int i = 0; i < model.n_links; ++i) weighted += model.link_mass[i] * frames.link_com[i];
  s.cog_origin = weighted / s.total_mass;

  Mat3 inertia = Mat3::Zero();
  for (int i = 0; i < model.n_links; ++i) {
    const Mat3& r = frames.links[i].rotation;
    inertia += r * link_inertia(model, i) * r.transpose();
    inertia += point_inertia(model.link_mass[i], frames.link_com[i] - s.cog_origin);
  }
  s.inertia = 0.5 * (inertia + inertia.transpose());
  return s;
}

}  // namespace multilink
