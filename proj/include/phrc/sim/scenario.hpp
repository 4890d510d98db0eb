#pragma once

#include "phrc/core/types.hpp"
#include "phrc/sim/human.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace phrc::sim {

/// Start/goal task with obstacles on the way and the scripted human partner.
///
/// The robot's own plan is a minimum-jerk straight line from start to goal
/// over `travel_time`; the human desired path is the detour around each
/// obstacle (see DetourGeometry).
struct Scenario {
  std::string name = "custom";
  Vec3 start = Vec3(-0.35, 0.0, 0.1);
  Vec3 goal = Vec3(0.35, 0.0, 0.1);
  std::vector<Obstacle> obstacles;
  double detour_side = 1.0;
  double rise = 0.10;
  double margin = 0.05;
  HumanLimb limb;
  double f_max = 15.0;
  double duration = 6.0;
  double travel_time = 4.0;
  double force_noise = 0.0;  // std (N) of additive force noise while engaged

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::filesystem::path& path);

  /// Nominal robot plan at time t (clamped to [0, travel_time]).
  StateSample plan(double t) const;
  DetourGeometry detour(const Obstacle& ob) const;

  /// Straight task with one obstacle whose position along the path
  /// (45-55 %), height class and detour side are drawn from `seed`.
  static Scenario standard(std::uint64_t seed);
  /// Same task with no obstacle; the human never engages.
  static Scenario free_motion();
};

/// Names accepted by the bridge's reset message: "standard", "free" and
/// "standard:<seed>".
Scenario scenario_by_name(const std::string& name);

}  // namespace phrc::sim
