#include "phrc/sim/human.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/minjerk.hpp"

#include <cmath>

namespace phrc::sim {

double obstacle_radius(ObstacleHeight h) { return h == ObstacleHeight::Low ? 0.04 : 0.08; }

std::string to_string(ObstacleHeight h) { return h == ObstacleHeight::Low ? "low" : "high"; }

ObstacleHeight parse_height(const std::string& s) {
  if (s == "low") return ObstacleHeight::Low;
  if (s == "high") return ObstacleHeight::High;
  throw ConfigError("unknown obstacle height '" + s + "'");
}

void HumanLimb::validate() const {
  for (int i = 0; i < 3; ++i)
    if (!(damping(i, i) > 0.0) || !(stiffness(i, i) > 0.0))
      throw ConfigError("human limb damping and stiffness must be positive definite");
}

Vec3 human_force(const HumanLimb& limb, const Vec3& x, const Vec3& v, const Vec3& x_des, const Vec3& v_des,
                 double f_max) {
  Vec3 f = limb.stiffness * (x_des - x) + limb.damping * (v_des - v);
  const double n = f.norm();
  if (n > f_max) f *= f_max / n;
  return f;
}

Vec3 DetourGeometry::direction() const { return (goal - start).normalized(); }

double DetourGeometry::length() const { return (goal - start).norm(); }

Vec3 DetourGeometry::normal() const {
  const Vec3 u = direction();
  Vec3 n = Vec3::UnitZ().cross(u);
  if (n.norm() < 1e-9) n = Vec3::UnitX().cross(u);
  return side * n.normalized();
}

double DetourGeometry::s_obstacle() const { return direction().dot(center - start); }

double DetourGeometry::offset(double s) const {
  const double a = amplitude();
  const double lo = engage_begin();
  const double off = disengage();
  if (s < off) return a * min_jerk((s - lo) / rise).s;
  return a * (1.0 - min_jerk((s - off) / rise).s);
}

double DetourGeometry::offset_slope(double s) const {
  const double a = amplitude();
  if (s < disengage()) return a * min_jerk((s - engage_begin()) / rise).ds / rise;
  return -a * min_jerk((s - disengage()) / rise).ds / rise;
}

void DetourGeometry::desired(const Vec3& x, const Vec3& v, Vec3& x_des, Vec3& v_des) const {
  const Vec3 u = direction();
  const Vec3 n = normal();
  const double s = u.dot(x - start);
  const double sdot = u.dot(v);
  // Along-path component follows the current state; only the lateral part is prescribed.
  const Vec3 lateral_free = x - start - u * s - n * n.dot(x - start);
  x_des = start + u * s + lateral_free + n * offset(s);
  v_des = v - n * n.dot(v) + n * (offset_slope(s) * sdot);
}

}  // namespace phrc::sim
