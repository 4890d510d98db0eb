#pragma once

#include "phrc/core/types.hpp"

#include <json.hpp>

#include <string>

namespace phrc::sim {

enum class ObstacleHeight { Low, High };

/// Sphere radius for each height class.
double obstacle_radius(ObstacleHeight h);
std::string to_string(ObstacleHeight h);
ObstacleHeight parse_height(const std::string& s);

struct Obstacle {
  Vec3 center = Vec3::Zero();
  double radius = 0.04;
  ObstacleHeight height = ObstacleHeight::Low;
};

/// Human arm impedance: f_h = K_h (x_des - x) + D_h (v_des - v).
struct HumanLimb {
  Mat3 damping = Mat3::Identity() * 20.0;
  Mat3 stiffness = Mat3::Identity() * 1000.0;

  void validate() const;
};

/// Limb force toward the desired state, norm-clamped to f_max with its
/// direction preserved.
Vec3 human_force(const HumanLimb& limb, const Vec3& x, const Vec3& v, const Vec3& x_des, const Vec3& v_des,
                 double f_max);

/// Lateral detour around one obstacle sitting on the straight start-goal line.
///
/// Along the path coordinate s the lateral offset rises with a minimum-jerk
/// profile over [s_obs - r - rise, s_obs - r], holds r + margin until
/// s_obs + r + margin (the disengage point), then falls back over `rise`.
struct DetourGeometry {
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::UnitX();
  Vec3 center = Vec3::UnitX() * 0.5;
  double radius = 0.04;
  double rise = 0.10;
  double margin = 0.05;
  double side = 1.0;  // +1 or -1 along the lateral normal

  Vec3 direction() const;
  double length() const;
  /// Horizontal unit normal to the path, signed by `side`.
  Vec3 normal() const;
  double s_obstacle() const;
  double amplitude() const { return radius + margin; }
  double engage_begin() const { return s_obstacle() - radius - rise; }
  double disengage() const { return s_obstacle() + radius + margin; }
  /// Distance from the obstacle centre at which the human engages.
  double trigger_distance() const { return radius + rise; }

  /// Lateral offset h(s) and dh/ds, including the return segment.
  double offset(double s) const;
  double offset_slope(double s) const;

  double path_coordinate(const Vec3& x) const { return direction().dot(x - start); }

  /// Desired state at the projection of (x, v) onto the path.
  void desired(const Vec3& x, const Vec3& v, Vec3& x_des, Vec3& v_des) const;
};

}  // namespace phrc::sim
