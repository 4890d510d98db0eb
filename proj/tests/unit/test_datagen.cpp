#include <doctest.h>

#include "phrc/core/error.hpp"
#include "phrc/datagen/generators.hpp"

#include <cmath>

using namespace phrc;
using namespace phrc::datagen;

namespace {

MultimodalParams noiseless() {
  MultimodalParams p;
  p.noise_sigma = 0.0;
  return p;
}

}  // namespace

TEST_CASE("multimodal trajectories satisfy minimum-jerk boundary conditions without noise") {
  std::vector<MultimodalMeta> meta;
  const auto trajs = gen_multimodal(5, 0.05, 7, noiseless(), &meta);
  REQUIRE(trajs.size() == 5);
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto& s = trajs[k].samples();
    CHECK(s.size() == 61);
    CHECK(s.front().vel.norm() < 1e-9);
    CHECK(s.back().vel.norm() < 1e-9);
    CHECK((s.back().pos - meta[k].goals[meta[k].chosen]).norm() < 1e-9);
    CHECK(trajs[k].branch() == Branch::Robot);
  }
}

TEST_CASE("multimodal prefix before the bifurcation heads for the centroid only") {
  std::vector<MultimodalMeta> meta;
  const auto trajs = gen_multimodal(20, 0.05, 8, noiseless(), &meta);
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto& s = trajs[k].samples();
    const Vec3 start = s.front().pos;
    const Vec3 main = (meta[k].centroid - start).normalized();
    for (const auto& x : s) {
      if (x.t >= meta[k].bifurcation * 3.0) break;
      const Vec3 d = x.pos - start;
      CHECK((d - main * main.dot(d)).norm() < 1e-12);
    }
  }
}

TEST_CASE("multimodal velocities agree with position differences to first order") {
  auto backward_error = [](double dt) {
    const auto tr = gen_multimodal(1, dt, 9, noiseless()).front();
    const auto i = static_cast<std::size_t>(std::llround(1.5 / dt));
    return ((tr[i].pos - tr[i - 1].pos) / dt - tr[i].vel).norm();
  };
  const double e1 = backward_error(0.01), e2 = backward_error(0.005), e3 = backward_error(0.0025);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("noisy positions integrate the noisy velocities") {
  const auto tr = gen_multimodal(1, 0.05, 10).front();
  const auto clean = gen_multimodal(1, 0.05, 10, noiseless()).front();
  // The velocity perturbation at step i is exactly the per-step position increment / dt.
  for (std::size_t i = 1; i < tr.size(); ++i) {
    const Vec3 dv = tr[i].vel - clean[i].vel;
    const Vec3 dp = (tr[i].pos - clean[i].pos) - (tr[i - 1].pos - clean[i - 1].pos);
    CHECK((dp / 0.05 - dv).norm() < 1e-12);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = gen_multimodal(10, 0.05, 11), b = gen_multimodal(10, 0.05, 11), c = gen_multimodal(10, 0.05, 12);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      CHECK(a[k][i].pos == b[k][i].pos);
      CHECK(a[k][i].vel == b[k][i].vel);
      differs = differs || a[k][i].pos != c[k][i].pos;
    }
  CHECK(differs);
  const auto p = gen_phrc(3, 3, 0.01, 5), q = gen_phrc(3, 3, 0.01, 5);
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k].samples().back().pos == q[k].samples().back().pos);
}

TEST_CASE("multimodal corpus: both sides of the goal fan occur at least 20% of the time") {
  std::vector<MultimodalMeta> meta;
  gen_multimodal(2000, 0.05, 1, {}, &meta);
  std::size_t left = 0, right = 0, two_goal = 0;
  for (const auto& m : meta) {
    const double side = m.lateral.dot(m.goals[m.chosen] - m.centroid);
    (side < 0.0 ? left : right) += 1;
    two_goal += m.goals.size() == 2;
  }
  CHECK(left >= 400);
  CHECK(right >= 400);
  CHECK(two_goal > 0);
  CHECK(two_goal < 2000);
}

TEST_CASE("window slicing yields windows for every generated trajectory") {
  for (const auto& t : gen_multimodal(20, 0.05, 2)) CHECK(!slice_windows(t, 8, 12).empty());
  for (const auto& t : gen_phrc(5, 5, 0.01, 2)) CHECK(!slice_windows(t, 8, 12).empty());
}

TEST_CASE("human force examples") {
  sim::HumanLimb limb;
  const Vec3 x(0.1, 0.2, 0.3), v(0.01, 0.0, -0.02);
  CHECK(sim::human_force(limb, x, v, x, v, 20.0).norm() == 0.0);

  limb.stiffness = Mat3::Identity() * 100.0;
  limb.damping = Mat3::Zero();
  const Vec3 f = sim::human_force(limb, Vec3::Zero(), Vec3::Zero(), Vec3(0.05, 0, 0), Vec3::Zero(), 20.0);
  CHECK(f.x() == doctest::Approx(5.0));
  CHECK(f.y() == 0.0);
  CHECK(f.z() == 0.0);

  const Vec3 dir = Vec3(1, -2, 0.5).normalized();
  const double f_max = 8.0;
  const Vec3 raw_target = dir * (3.0 * f_max / 100.0);
  const Vec3 clamped = sim::human_force(limb, Vec3::Zero(), Vec3::Zero(), raw_target, Vec3::Zero(), f_max);
  CHECK(clamped.norm() == doctest::Approx(f_max));
  CHECK((clamped.normalized() - dir).norm() < 1e-12);
}

TEST_CASE("pHRC corpus: counts, labels and avoidance force structure") {
  std::vector<PhrcMeta> meta;
  const PhrcParams params;
  const auto trajs = gen_phrc(40, 60, 0.01, 3, params, &meta);
  std::size_t free = 0, avoid = 0;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const auto& tr = trajs[k];
    if (tr.label() == Label::ObstacleFree) {
      ++free;
      CHECK(tr.branch() == Branch::Robot);
      continue;
    }
    ++avoid;
    CHECK(tr.branch() == Branch::Human);
    const auto& d = meta[k].detour;
    double peak = -1.0, peak_s = 0.0, min_dist = 1e9;
    for (const auto& s : tr.samples()) {
      const double ps = d.path_coordinate(s.pos);
      const double fn = s.force->norm();
      if (ps < d.engage_begin() || ps > d.disengage()) CHECK(fn == 0.0);
      if (fn > peak) {
        peak = fn;
        peak_s = ps;
      }
      CHECK(fn <= params.f_max + 1e-12);
      min_dist = std::min(min_dist, (s.pos - d.center).norm());
    }
    CHECK(peak > 0.5);
    CHECK(peak_s >= d.engage_begin());
    CHECK(peak_s <= d.disengage());
    CHECK(min_dist > d.radius);
  }
  CHECK(free == 40);
  CHECK(avoid == 60);
}

TEST_CASE("detour offset is continuous and returns to zero") {
  sim::DetourGeometry d;
  d.start = Vec3::Zero();
  d.goal = Vec3(0.8, 0, 0);
  d.center = Vec3(0.4, 0, 0);
  d.radius = 0.08;
  CHECK(d.offset(d.engage_begin()) == 0.0);
  CHECK(d.offset(d.s_obstacle()) == doctest::Approx(d.amplitude()));
  CHECK(d.offset(d.disengage()) == doctest::Approx(d.amplitude()));
  CHECK(d.offset(d.disengage() + d.rise) == doctest::Approx(0.0));
  CHECK(std::abs(d.normal().z()) < 1e-12);
  // Slope agrees with a central difference of the offset.
  for (double s = 0.1; s < 0.7; s += 0.013) {
    const double fd = (d.offset(s + 1e-6) - d.offset(s - 1e-6)) / 2e-6;
    CHECK(d.offset_slope(s) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("generator parameter validation") {
  MultimodalParams p;
  p.goals_min = 1;
  CHECK_THROWS_AS(gen_multimodal(1, 0.05, 0, p), ConfigError);
  CHECK_THROWS_AS(gen_multimodal(0, 0.05, 0), ConfigError);
  CHECK_THROWS_AS(gen_multimodal(1, 0.0, 0), ConfigError);
  PhrcParams q;
  q.f_max = 0.0;
  CHECK_THROWS_AS(gen_phrc(1, 1, 0.01, 0, q), ConfigError);
}
