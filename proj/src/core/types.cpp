#include "phrc/core/types.hpp"

#include "phrc/core/error.hpp"

#include <cmath>

namespace phrc {

std::string to_string(Branch b) { return b == Branch::Robot ? "robot" : "human"; }

std::string to_string(Label l) {
  return l == Label::ObstacleFree ? "obstacle_free" : "obstacle_avoid";
}

Branch parse_branch(const std::string& s) {
  if (s == "robot") return Branch::Robot;
  if (s == "human") return Branch::Human;
  throw ValidationError("unknown branch '" + s + "' (expected robot|human)");
}

Label parse_label(const std::string& s) {
  if (s == "obstacle_free") return Label::ObstacleFree;
  if (s == "obstacle_avoid") return Label::ObstacleAvoid;
  throw ValidationError("unknown label '" + s + "'");
}

Vec6 StateSample::state() const {
  Vec6 s;
  s << pos, vel;
  return s;
}

Trajectory::Trajectory(Branch branch, double dt, std::vector<StateSample> samples, Label label)
    : branch_(branch), dt_(dt), samples_(std::move(samples)), label_(label) {
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ValidationError("trajectory dt must be positive");
  if (samples_.size() < 2) throw ValidationError("trajectory needs at least 2 samples");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const StateSample& s = samples_[i];
    if (!std::isfinite(s.t) || !s.pos.allFinite() || !s.vel.allFinite())
      throw ValidationError("non-finite sample at index " + std::to_string(i));
    if (branch_ == Branch::Robot && s.force)
      throw ValidationError("robot-branch sample carries a force at index " + std::to_string(i));
    if (branch_ == Branch::Human) {
      if (!s.force)
        throw ValidationError("human-branch sample lacks a force at index " + std::to_string(i));
      if (!s.force->allFinite())
        throw ValidationError("non-finite force at index " + std::to_string(i));
    }
    if (i > 0 && std::abs((s.t - samples_[i - 1].t) - dt_) > kTimeTolerance)
      throw ValidationError("non-uniform timestamps at index " + std::to_string(i));
  }
}

std::size_t window_count(std::size_t n, std::size_t l_obs, std::size_t l_fut, std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be >= 1");
  if (n < l_obs + l_fut) return 0;
  return (n - l_obs - l_fut) / stride + 1;
}

std::vector<WindowPair> slice_windows(const Trajectory& traj, std::size_t l_obs, std::size_t l_fut,
                                      std::size_t stride) {
  if (l_obs < 2 || l_fut < 1) throw ConfigError("window lengths need l_obs >= 2 and l_fut >= 1");
  const std::size_t count = window_count(traj.size(), l_obs, l_fut, stride);
  std::vector<WindowPair> out;
  out.reserve(count);
  std::span<const StateSample> all(traj.samples());
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t end = l_obs - 1 + k * stride;  // index of T_now
    out.push_back({all.subspan(end + 1 - l_obs, l_obs), all.subspan(end + 1, l_fut)});
  }
  return out;
}

}  // namespace phrc
