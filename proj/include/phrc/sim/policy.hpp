#pragma once

#include "phrc/core/types.hpp"
#include "phrc/sim/plant.hpp"
#include "phrc/sim/scenario.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace phrc::sim {

/// Norm clamp that keeps the direction.
Vec3 clamp_norm(Vec3 f, double f_max);

/// Scripted human partner: disengaged (exactly zero force) until the plant
/// comes within an obstacle's trigger distance, then pulls toward the detour
/// until the plant passes the disengage point.
class HumanPolicy {
 public:
  explicit HumanPolicy(const Scenario& sc, std::uint64_t seed = 0);

  Vec3 force(const PlantState& s);
  bool engaged() const noexcept { return active_ >= 0; }

 private:
  Scenario sc_;
  std::vector<DetourGeometry> detours_;
  std::vector<bool> done_;
  int active_ = -1;
  std::mt19937_64 rng_;
};

}  // namespace phrc::sim
