#pragma once

#include "phrc/core/types.hpp"
#include "phrc/control/allocator.hpp"
#include "phrc/sim/human.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace phrc::datagen {

struct MultimodalParams {
  double duration = 3.0;
  int goals_min = 2;
  int goals_max = 4;
  double noise_sigma = 0.01;  // m/s, white noise on velocity
  double bifurcation_lo = 0.3;
  double bifurcation_hi = 0.7;
  double travel_min = 0.4;
  double travel_max = 0.8;
  double spread_min = 0.15;  // half-width of the goal fan
  double spread_max = 0.30;

  void validate() const;
  nlohmann::json to_json() const;
  static MultimodalParams from_json(const nlohmann::json& j);
};

/// Ground-truth structure of one multimodal trajectory.
struct MultimodalMeta {
  std::vector<Vec3> goals;
  std::size_t chosen = 0;
  double bifurcation = 0.5;  // fraction of the duration
  Vec3 centroid = Vec3::Zero();
  Vec3 lateral = Vec3::UnitY();  // fan axis
};

/// Minimum-jerk motion from a random start toward the goal centroid, with a
/// superposed minimum-jerk correction toward the chosen goal starting at the
/// bifurcation time. Positions integrate the noisy velocities.
std::vector<Trajectory> gen_multimodal(std::size_t n, double dt, std::uint64_t seed,
                                       const MultimodalParams& params = {},
                                       std::vector<MultimodalMeta>* meta = nullptr);

struct PhrcParams {
  double duration = 4.0;
  double length_min = 0.6;
  double length_max = 0.8;
  double jitter_sigma = 0.005;  // m/s on free trajectories
  double obstacle_lo = 0.45;    // obstacle position as a fraction of path length
  double obstacle_hi = 0.55;
  double rise = 0.10;
  double margin = 0.05;
  double f_max = 15.0;
  sim::HumanLimb limb;
  /// Arm impedance while demonstrating (teach mode, much softer than in the loop).
  control::ImpedanceParams demo_arm{Mat3::Identity() * 5.0, Mat3::Identity() * 20.0, Mat3::Identity() * 20.0};

  void validate() const;
  nlohmann::json to_json() const;
  static PhrcParams from_json(const nlohmann::json& j);
};

struct PhrcMeta {
  sim::DetourGeometry detour;
  sim::ObstacleHeight height = sim::ObstacleHeight::Low;
};

/// Free records (Robot branch, ObstacleFree) come first, then avoidance
/// records (Human branch, ObstacleAvoid): the demo arm follows the nominal
/// straight path under `demo_arm` while the scripted human guides it round
/// the obstacle; positions, velocities and forces are the simulated ones.
std::vector<Trajectory> gen_phrc(std::size_t n_free, std::size_t n_avoid, double dt, std::uint64_t seed,
                                 const PhrcParams& params = {}, std::vector<PhrcMeta>* meta = nullptr);

}  // namespace phrc::datagen
