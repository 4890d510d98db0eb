#pragma once

#include "phrc/control/allocator.hpp"
#include "phrc/core/types.hpp"
#include "phrc/intent/model.hpp"
#include "phrc/sim/metrics.hpp"
#include "phrc/sim/plant.hpp"
#include "phrc/sim/policy.hpp"
#include "phrc/sim/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace phrc::sim {

/// Branch prediction from a history window ending at the current tick.
using Predictor = std::function<intent::Prediction(std::span<const StateSample>)>;

Predictor model_predictor(const intent::BranchModel& model);
/// Constant-velocity extrapolation; handy for tests that need no network.
Predictor constant_velocity_predictor(std::size_t l_fut, double dt);

struct Predictors {
  Predictor robot;
  Predictor human;
  std::size_t l_obs = 8;
};

Predictors model_predictors(const intent::BranchModel& robot, const intent::BranchModel& human);

struct EpisodeTick {
  double t = 0.0;
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 f_h = Vec3::Zero();
  Vec3 f_r = Vec3::Zero();
  double kappa = 0.5;
  Vec6 y_ref = Vec6::Zero();
};

/// Predictions as produced at one refresh (positions only).
struct PredictionFrame {
  double t = 0.0;
  std::vector<Vec3> human;
  std::vector<Vec3> robot;
};

struct EpisodeLog {
  Scenario scenario;
  control::ControllerConfig controller;
  std::uint64_t seed = 0;
  std::vector<EpisodeTick> ticks;
  std::vector<PredictionFrame> predictions;  // every third refresh; not written to file
  bool failed = false;
  std::optional<std::size_t> failed_tick;
  std::string failure;
  PhrcMetrics guided;      // angle metrics over human-guided ticks
  double min_clearance = 0.0;  // min over ticks and obstacles of |x - c| - r; +inf without obstacles

  ForceTrace trace(std::vector<Vec3>& pos, std::vector<Vec3>& fh, std::vector<Vec3>& fr) const;
  /// Recomputes `guided` and `min_clearance` from the ticks.
  void compute_summary();

  nlohmann::json header() const;
  /// `#EPISODE {json}` line, the CSV header and one row per tick.
  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;
  /// Restores the header fields and tick columns (y_ref is not stored).
  static EpisodeLog read(std::istream& in);
  static EpisodeLog read(const std::filesystem::path& path);
};

inline constexpr const char* kEpisodeColumns = "t,x,y,z,vx,vy,vz,fhx,fhy,fhz,frx,fry,frz,kappa";

/// Tick-by-tick closed loop: human force, prediction refresh at predict_hz,
/// role allocation and one plant step per control period.
class ClosedLoop {
 public:
  ClosedLoop(Scenario sc, control::ControllerConfig cfg, Predictors predictors, std::uint64_t seed = 0);

  /// Advances one control period. `external_force`, when given, replaces the
  /// scripted human (clamped to f_max). Throws NumericalError on a
  /// non-finite state or ValidationError on a stale prediction.
  const EpisodeTick& step(const std::optional<Vec3>& external_force = std::nullopt);

  double time() const noexcept { return static_cast<double>(tick_) * dt_; }
  double dt() const noexcept { return dt_; }
  std::size_t tick_index() const noexcept { return tick_; }
  bool finished() const noexcept { return time() >= sc_.duration - 0.5 * dt_; }
  const PlantState& state() const noexcept { return state_; }
  const Scenario& scenario() const noexcept { return sc_; }
  const control::RoleAllocator& allocator() const noexcept { return alloc_; }
  void set_alpha(double alpha) { alloc_.set_alpha(alpha); }
  const intent::Prediction& prediction_human() const noexcept { return pred_h_; }
  const intent::Prediction& prediction_robot() const noexcept { return pred_r_; }
  double prediction_time() const noexcept { return pred_t_; }

 private:
  void refresh_predictions();
  std::vector<StateSample> robot_window() const;
  std::vector<StateSample> human_window() const;
  Vec6 lookahead(const intent::Prediction& p, double age) const;

  Scenario sc_;
  control::ControllerConfig cfg_;
  Predictors pred_;
  control::RoleAllocator alloc_;
  HumanPolicy human_;
  double dt_;
  std::size_t refresh_every_;
  std::size_t tick_ = 0;
  PlantState state_;
  std::vector<StateSample> history_;  // actual state and applied human force per tick
  intent::Prediction pred_h_, pred_r_;
  double pred_t_ = 0.0;
  EpisodeTick last_;
};

/// Runs the scenario for its full duration. A stale prediction or a
/// non-finite state ends the episode early with `failed` set and the tick
/// index recorded; the summary is computed either way.
EpisodeLog run_episode(const Scenario& sc, const control::ControllerConfig& cfg, const Predictors& predictors,
                       std::uint64_t seed);

}  // namespace phrc::sim
