#include "phrc/datagen/generators.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/minjerk.hpp"
#include "phrc/sim/policy.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace phrc::datagen {

namespace {

using Rng = std::mt19937_64;

Rng derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t sample_count(double duration, double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const double steps = duration / dt;
  const auto n = static_cast<std::size_t>(std::llround(steps));
  if (n < 1) throw ConfigError("duration shorter than one sample period");
  return n + 1;
}

Vec3 heading(double phi) { return {std::cos(phi), std::sin(phi), 0.0}; }

// Adds white velocity noise and integrates it into the positions so that the
// backward difference of positions stays consistent with the velocities.
void add_velocity_noise(std::vector<StateSample>& samples, double sigma, double dt, Rng& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> nd(0.0, sigma);
  Vec3 drift = Vec3::Zero();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec3 e(nd(rng), nd(rng), nd(rng));
    if (i > 0) drift += e * dt;
    samples[i].vel += e;
    samples[i].pos += drift;
  }
}

}  // namespace

void MultimodalParams::validate() const {
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (goals_min < 2 || goals_max < goals_min) throw ConfigError("need 2 <= goals_min <= goals_max");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(0.0 < bifurcation_lo && bifurcation_lo <= bifurcation_hi && bifurcation_hi < 1.0))
    throw ConfigError("bifurcation range must lie inside (0, 1)");
  if (!(0.0 < travel_min && travel_min <= travel_max)) throw ConfigError("invalid travel range");
  if (!(0.0 < spread_min && spread_min <= spread_max)) throw ConfigError("invalid spread range");
}

nlohmann::json MultimodalParams::to_json() const {
  return {{"duration", duration},       {"goals_min", goals_min},           {"goals_max", goals_max},
          {"noise_sigma", noise_sigma}, {"bifurcation_lo", bifurcation_lo}, {"bifurcation_hi", bifurcation_hi},
          {"travel_min", travel_min},   {"travel_max", travel_max},         {"spread_min", spread_min},
          {"spread_max", spread_max}};
}

MultimodalParams MultimodalParams::from_json(const nlohmann::json& j) {
  MultimodalParams p;
  p.duration = j.value("duration", p.duration);
  p.goals_min = j.value("goals_min", p.goals_min);
  p.goals_max = j.value("goals_max", p.goals_max);
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  p.bifurcation_lo = j.value("bifurcation_lo", p.bifurcation_lo);
  p.bifurcation_hi = j.value("bifurcation_hi", p.bifurcation_hi);
  p.travel_min = j.value("travel_min", p.travel_min);
  p.travel_max = j.value("travel_max", p.travel_max);
  p.spread_min = j.value("spread_min", p.spread_min);
  p.spread_max = j.value("spread_max", p.spread_max);
  p.validate();
  return p;
}

std::vector<Trajectory> gen_multimodal(std::size_t n, double dt, std::uint64_t seed, const MultimodalParams& params,
                                       std::vector<MultimodalMeta>* meta) {
  params.validate();
  if (n < 1) throw ConfigError("gen_multimodal needs n >= 1");
  const std::size_t count = sample_count(params.duration, dt);
  const double T = params.duration;
  std::vector<Trajectory> out;
  out.reserve(n);
  if (meta) meta->clear();

  for (std::size_t k = 0; k < n; ++k) {
    Rng rng = derived_rng(seed, 1, k);
    const Vec3 start(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, 0.0, 0.2));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Vec3 u = heading(phi);
    const Vec3 lateral(-u.y(), u.x(), 0.0);
    const double travel = uniform(rng, params.travel_min, params.travel_max);
    const double spread = uniform(rng, params.spread_min, params.spread_max);
    const int n_goals = std::uniform_int_distribution<int>(params.goals_min, params.goals_max)(rng);

    MultimodalMeta m;
    m.lateral = lateral;
    Vec3 centroid = Vec3::Zero();
    for (int i = 0; i < n_goals; ++i) {
      const double frac = -1.0 + 2.0 * i / (n_goals - 1);
      const Vec3 jitter(uniform(rng, -0.02, 0.02), uniform(rng, -0.02, 0.02), uniform(rng, -0.02, 0.02));
      m.goals.push_back(start + u * travel + lateral * (spread * frac) + jitter);
      centroid += m.goals.back();
    }
    m.centroid = centroid / n_goals;
    m.chosen = std::uniform_int_distribution<std::size_t>(0, m.goals.size() - 1)(rng);
    m.bifurcation = uniform(rng, params.bifurcation_lo, params.bifurcation_hi);

    const Vec3 main = m.centroid - start;
    const Vec3 correction = m.goals[m.chosen] - m.centroid;
    const double tb = 1.0 - m.bifurcation;
    std::vector<StateSample> samples(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) * dt;
      const MinJerk a = min_jerk(t / T);
      const MinJerk b = min_jerk((t / T - m.bifurcation) / tb);
      samples[i].t = t;
      samples[i].pos = start + main * a.s + correction * b.s;
      samples[i].vel = main * (a.ds / T) + correction * (b.ds / (tb * T));
    }
    add_velocity_noise(samples, params.noise_sigma, dt, rng);
    out.emplace_back(Branch::Robot, dt, std::move(samples), Label::ObstacleFree);
    if (meta) meta->push_back(std::move(m));
  }
  return out;
}

void PhrcParams::validate() const {
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (!(0.0 < length_min && length_min <= length_max)) throw ConfigError("invalid path length range");
  if (!(jitter_sigma >= 0.0)) throw ConfigError("jitter_sigma must be non-negative");
  if (!(0.0 < obstacle_lo && obstacle_lo <= obstacle_hi && obstacle_hi < 1.0))
    throw ConfigError("obstacle range must lie inside (0, 1)");
  if (!(rise > 0.0) || !(margin > 0.0) || !(f_max > 0.0)) throw ConfigError("rise, margin and f_max must be positive");
  limb.validate();
  demo_arm.validate();
}

nlohmann::json PhrcParams::to_json() const {
  return {{"duration", duration},     {"length_min", length_min},   {"length_max", length_max},
          {"jitter_sigma", jitter_sigma}, {"obstacle_lo", obstacle_lo}, {"obstacle_hi", obstacle_hi},
          {"rise", rise},             {"margin", margin},           {"f_max", f_max},
          {"limb_damping", limb.damping(0, 0)}, {"limb_stiffness", limb.stiffness(0, 0)},
          {"demo_mass", demo_arm.M(0, 0)}, {"demo_damping", demo_arm.D(0, 0)}, {"demo_stiffness", demo_arm.K(0, 0)}};
}

PhrcParams PhrcParams::from_json(const nlohmann::json& j) {
  PhrcParams p;
  p.duration = j.value("duration", p.duration);
  p.length_min = j.value("length_min", p.length_min);
  p.length_max = j.value("length_max", p.length_max);
  p.jitter_sigma = j.value("jitter_sigma", p.jitter_sigma);
  p.obstacle_lo = j.value("obstacle_lo", p.obstacle_lo);
  p.obstacle_hi = j.value("obstacle_hi", p.obstacle_hi);
  p.rise = j.value("rise", p.rise);
  p.margin = j.value("margin", p.margin);
  p.f_max = j.value("f_max", p.f_max);
  p.limb.damping = Mat3::Identity() * j.value("limb_damping", p.limb.damping(0, 0));
  p.limb.stiffness = Mat3::Identity() * j.value("limb_stiffness", p.limb.stiffness(0, 0));
  p.demo_arm.M = Mat3::Identity() * j.value("demo_mass", p.demo_arm.M(0, 0));
  p.demo_arm.D = Mat3::Identity() * j.value("demo_damping", p.demo_arm.D(0, 0));
  p.demo_arm.K = Mat3::Identity() * j.value("demo_stiffness", p.demo_arm.K(0, 0));
  p.validate();
  return p;
}

std::vector<Trajectory> gen_phrc(std::size_t n_free, std::size_t n_avoid, double dt, std::uint64_t seed,
                                 const PhrcParams& params, std::vector<PhrcMeta>* meta) {
  params.validate();
  const std::size_t count = sample_count(params.duration, dt);
  const double T = params.duration;
  std::vector<Trajectory> out;
  out.reserve(n_free + n_avoid);
  if (meta) meta->clear();

  for (std::size_t k = 0; k < n_free + n_avoid; ++k) {
    const bool avoid = k >= n_free;
    Rng rng = derived_rng(seed, avoid ? 3 : 2, k);
    const Vec3 start(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, 0.0, 0.2));
    const Vec3 u = heading(uniform(rng, 0.0, 2.0 * std::numbers::pi));
    const double length = uniform(rng, params.length_min, params.length_max);

    PhrcMeta m;
    m.detour.start = start;
    m.detour.goal = start + u * length;
    m.detour.rise = params.rise;
    m.detour.margin = params.margin;

    std::vector<StateSample> samples(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) * dt;
      const MinJerk a = min_jerk(t / T);
      samples[i].t = t;
      samples[i].pos = start + u * (length * a.s);
      samples[i].vel = u * (length * a.ds / T);
    }
    if (!avoid) {
      add_velocity_noise(samples, params.jitter_sigma, dt, rng);
      out.emplace_back(Branch::Robot, dt, std::move(samples), Label::ObstacleFree);
      if (meta) meta->push_back(std::move(m));
      continue;
    }

    m.height = uniform(rng, 0.0, 1.0) < 0.5 ? sim::ObstacleHeight::Low : sim::ObstacleHeight::High;
    m.detour.radius = sim::obstacle_radius(m.height);
    m.detour.center = start + u * (length * uniform(rng, params.obstacle_lo, params.obstacle_hi));
    m.detour.side = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    // Teach-mode demonstration: a compliant arm tracks the nominal path while
    // the scripted human pulls it round the obstacle.
    sim::Scenario sc;
    sc.name = "demo";
    sc.start = m.detour.start;
    sc.goal = m.detour.goal;
    sc.obstacles.push_back({m.detour.center, m.detour.radius, m.height});
    sc.detour_side = m.detour.side;
    sc.rise = params.rise;
    sc.margin = params.margin;
    sc.limb = params.limb;
    sc.f_max = params.f_max;
    sc.duration = T;
    sc.travel_time = T;
    sim::HumanPolicy human(sc);
    sim::PlantState state;
    state.x = start;
    for (auto& s : samples) {
      const Vec6 y_ref = (Vec6() << s.pos, s.vel).finished();
      s.pos = state.x;
      s.vel = state.v;
      s.force = human.force(state);
      state = sim::plant_step(params.demo_arm, state, *s.force, Vec3::Zero(), y_ref, dt);
    }
    out.emplace_back(Branch::Human, dt, std::move(samples), Label::ObstacleAvoid);
    if (meta) meta->push_back(std::move(m));
  }
  return out;
}

}  // namespace phrc::datagen
