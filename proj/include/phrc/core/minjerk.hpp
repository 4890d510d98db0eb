#pragma once

#include <algorithm>

namespace phrc {

/// Minimum-jerk blend s(u) = 10u^3 - 15u^4 + 6u^5 on u in [0, 1] (clamped
/// outside), with its first and second derivatives in u.
struct MinJerk {
  double s, ds, dds;
};

inline MinJerk min_jerk(double u) {
  if (u <= 0.0) return {0.0, 0.0, 0.0};
  if (u >= 1.0) return {1.0, 0.0, 0.0};
  const double u2 = u * u, u3 = u2 * u;
  return {u3 * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - 2.0 * u + u2), 60.0 * u * (1.0 - 3.0 * u + 2.0 * u2)};
}

}  // namespace phrc
