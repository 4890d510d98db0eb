#pragma once

#include "phrc/control/allocator.hpp"
#include "phrc/sim/episode.hpp"
#include "phrc/sim/metrics.hpp"
#include "phrc/sim/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace phrc::bridge {

struct BridgeConfig {
  double frame_hz = 30.0;
  double hold_s = 0.2;       // client force is held this long, then zero
  double liveness_s = 10.0;  // session expires this long after the last client message
  std::size_t pred_stride = 3;

  void validate() const;
};

std::string error_frame(std::string_view msg);

/// One interactive session: a closed loop whose human force comes from the
/// client. Transport-free; the caller supplies the clock (seconds, monotone).
///
/// Client messages: force {fx, fy, fz}, reset {scenario?}, config {alpha}.
/// A malformed message yields an error frame and leaves the session as it was.
class BridgeSession {
 public:
  BridgeSession(sim::Predictors predictors, control::ControllerConfig cfg, sim::Scenario sc, BridgeConfig bc = {},
                double now = 0.0);

  /// Returns an error frame when the message is rejected.
  std::optional<std::string> on_message(std::string_view text, double now);

  /// One control period. Returns a state frame when one is due, or an error
  /// frame if the loop failed (the scenario is then restarted).
  std::optional<std::string> tick(double now);

  bool expired(double now) const noexcept { return now - last_seen_ > bc_.liveness_s; }
  /// Force the loop applies at `now` after hold and clamp.
  Vec3 applied_force(double now) const;

  const sim::EpisodeTick& last_tick() const noexcept { return last_; }
  const sim::ClosedLoop& loop() const noexcept { return *loop_; }
  double alpha() const noexcept { return cfg_.alpha; }
  std::uint64_t ticks() const noexcept { return ticks_; }
  std::uint64_t frames() const noexcept { return frames_; }
  sim::PhrcMetrics metrics() const { return acc_.summary(); }

  nlohmann::json state_frame() const;

 private:
  void restart(const sim::Scenario& sc);

  sim::Predictors predictors_;
  control::ControllerConfig cfg_;
  BridgeConfig bc_;
  std::unique_ptr<sim::ClosedLoop> loop_;
  sim::PhrcAccumulator acc_{true};
  sim::EpisodeTick last_;
  Vec3 force_ = Vec3::Zero();
  double force_at_ = -1e300;
  double last_seen_;
  std::uint64_t ticks_ = 0;   // since the last restart
  std::uint64_t frames_ = 0;  // since construction
};

}  // namespace phrc::bridge
