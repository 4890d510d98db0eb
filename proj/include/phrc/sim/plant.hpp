#pragma once

#include "phrc/control/allocator.hpp"
#include "phrc/core/types.hpp"

namespace phrc::sim {

struct PlantState {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

/// One semi-implicit Euler step of
///   M a = f_h + f_r - D (v - v_ref) - K (x - x_ref)
/// with y_ref = [x_ref, v_ref]: velocity first, then position from the new velocity.
PlantState plant_step(const control::ImpedanceParams& imp, const PlantState& s, const Vec3& f_h, const Vec3& f_r,
                      const Vec6& y_ref, double dt);

/// 1/2 e'^T M e' + 1/2 e^T K e for the error to a fixed reference.
double plant_energy(const control::ImpedanceParams& imp, const PlantState& s, const Vec6& y_ref);

}  // namespace phrc::sim
