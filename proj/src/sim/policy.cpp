#include "phrc/sim/policy.hpp"

namespace phrc::sim {

Vec3 clamp_norm(Vec3 f, double f_max) {
  const double n = f.norm();
  if (n > f_max) f *= f_max / n;
  return f;
}

HumanPolicy::HumanPolicy(const Scenario& sc, std::uint64_t seed) : sc_(sc), rng_(seed) {
  for (const Obstacle& ob : sc_.obstacles) detours_.push_back(sc_.detour(ob));
  done_.assign(detours_.size(), false);
}

Vec3 HumanPolicy::force(const PlantState& s) {
  if (active_ >= 0 && detours_[active_].path_coordinate(s.x) > detours_[active_].disengage()) {
    done_[active_] = true;
    active_ = -1;
  }
  if (active_ < 0) {
    for (std::size_t i = 0; i < detours_.size(); ++i) {
      const DetourGeometry& d = detours_[i];
      if (done_[i] || d.path_coordinate(s.x) > d.disengage()) continue;
      if ((s.x - d.center).norm() <= d.trigger_distance()) {
        active_ = static_cast<int>(i);
        break;
      }
    }
  }
  if (active_ < 0) return Vec3::Zero();
  Vec3 x_des, v_des;
  detours_[active_].desired(s.x, s.v, x_des, v_des);
  Vec3 f = human_force(sc_.limb, s.x, s.v, x_des, v_des, sc_.f_max);
  if (sc_.force_noise > 0.0) {
    std::normal_distribution<double> nd(0.0, sc_.force_noise);
    f += Vec3(nd(rng_), nd(rng_), nd(rng_));
    f = clamp_norm(f, sc_.f_max);
  }
  return f;
}

}  // namespace phrc::sim
