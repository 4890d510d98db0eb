#include "phrc/sim/scenario.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/minjerk.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace phrc::sim {

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must be a 3-array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

void Scenario::validate() const {
  if (!finite(start) || !finite(goal)) throw ConfigError("scenario start/goal must be finite");
  if ((goal - start).norm() < 1e-6) throw ConfigError("scenario start and goal coincide");
  if (!(f_max > 0.0)) throw ConfigError("f_max must be positive");
  if (!(duration > 0.0) || !(travel_time > 0.0)) throw ConfigError("duration and travel_time must be positive");
  if (!(rise > 0.0) || !(margin >= 0.0)) throw ConfigError("detour rise must be positive and margin non-negative");
  if (!(force_noise >= 0.0)) throw ConfigError("force_noise must be non-negative");
  if (detour_side != 1.0 && detour_side != -1.0) throw ConfigError("detour_side must be +1 or -1");
  limb.validate();
  for (const Obstacle& ob : obstacles) {
    if (!finite(ob.center) || !(ob.radius > 0.0)) throw ConfigError("obstacle needs a finite centre and radius > 0");
    if ((ob.center - start).norm() <= ob.radius || (ob.center - goal).norm() <= ob.radius)
      throw ConfigError("obstacle contains the start or the goal");
  }
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json obs = nlohmann::json::array();
  for (const Obstacle& ob : obstacles)
    obs.push_back({{"center", vec_json(ob.center)}, {"radius", ob.radius}, {"height", to_string(ob.height)}});
  return {{"name", name},
          {"start", vec_json(start)},
          {"goal", vec_json(goal)},
          {"obstacles", obs},
          {"detour_side", detour_side},
          {"rise", rise},
          {"margin", margin},
          {"limb_damping", vec_json(limb.damping.diagonal())},
          {"limb_stiffness", vec_json(limb.stiffness.diagonal())},
          {"f_max", f_max},
          {"duration", duration},
          {"travel_time", travel_time},
          {"force_noise", force_noise}};
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  static const std::set<std::string> known{"name",        "start",  "goal",          "obstacles",      "detour_side",
                                           "rise",        "margin", "limb_damping",  "limb_stiffness", "f_max",
                                           "duration",    "travel_time", "force_noise"};
  Scenario s;
  try {
    for (const auto& [key, val] : j.items()) {
      if (!known.count(key)) throw ConfigError("unknown scenario key '" + key + "'");
      if (key == "name") s.name = val.get<std::string>();
      if (key == "start") s.start = vec_from(val, "start");
      if (key == "goal") s.goal = vec_from(val, "goal");
      if (key == "detour_side") s.detour_side = val.get<double>();
      if (key == "rise") s.rise = val.get<double>();
      if (key == "margin") s.margin = val.get<double>();
      if (key == "limb_damping") s.limb.damping = vec_from(val, "limb_damping").asDiagonal();
      if (key == "limb_stiffness") s.limb.stiffness = vec_from(val, "limb_stiffness").asDiagonal();
      if (key == "f_max") s.f_max = val.get<double>();
      if (key == "duration") s.duration = val.get<double>();
      if (key == "travel_time") s.travel_time = val.get<double>();
      if (key == "force_noise") s.force_noise = val.get<double>();
      if (key == "obstacles") {
        if (!val.is_array()) throw ConfigError("obstacles must be an array");
        for (const auto& o : val) {
          Obstacle ob;
          ob.center = vec_from(o.at("center"), "obstacle center");
          ob.height = parse_height(o.value("height", std::string("low")));
          ob.radius = o.contains("radius") ? o.at("radius").get<double>() : obstacle_radius(ob.height);
          s.obstacles.push_back(ob);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

StateSample Scenario::plan(double t) const {
  const MinJerk m = min_jerk(t / travel_time);
  StateSample s;
  s.t = t;
  s.pos = start + (goal - start) * m.s;
  s.vel = (goal - start) * (m.ds / travel_time);
  return s;
}

DetourGeometry Scenario::detour(const Obstacle& ob) const {
  DetourGeometry d;
  d.start = start;
  d.goal = goal;
  d.center = ob.center;
  d.radius = ob.radius;
  d.rise = rise;
  d.margin = margin;
  d.side = detour_side;
  return d;
}

Scenario Scenario::standard(std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{7}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scenario s;
  s.name = "standard:" + std::to_string(seed);
  Obstacle ob;
  const double frac = 0.45 + 0.10 * u(rng);
  ob.height = u(rng) < 0.5 ? ObstacleHeight::Low : ObstacleHeight::High;
  ob.radius = obstacle_radius(ob.height);
  ob.center = s.start + (s.goal - s.start) * frac;
  s.detour_side = u(rng) < 0.5 ? -1.0 : 1.0;
  s.obstacles.push_back(ob);
  s.validate();
  return s;
}

Scenario Scenario::free_motion() {
  Scenario s;
  s.name = "free";
  return s;
}

Scenario scenario_by_name(const std::string& name) {
  if (name == "free") return Scenario::free_motion();
  if (name == "standard") return Scenario::standard(0);
  const std::string prefix = "standard:";
  if (name.rfind(prefix, 0) == 0) {
    const std::string rest = name.substr(prefix.size());
    if (!rest.empty() && rest.size() < 20 && rest.find_first_not_of("0123456789") == std::string::npos)
      return Scenario::standard(std::stoull(rest));
  }
  throw ValidationError("unknown scenario '" + name + "'");
}

}  // namespace phrc::sim
