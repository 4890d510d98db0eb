#include <doctest.h>

#include "phrc/control/allocator.hpp"
#include "phrc/core/error.hpp"
#include "support/lqr_oracle.hpp"

#include <chrono>
#include <cmath>
#include <random>

using namespace phrc;
using namespace phrc::control;
using namespace phrc::testing;

namespace {

CostWeights random_weights(std::mt19937_64& rng, bool equal_cross) {
  std::normal_distribution<double> nd;
  auto psd6 = [&] {
    Mat6 a;
    for (int i = 0; i < 36; ++i) a.data()[i] = nd(rng);
    Mat6 m = a * a.transpose() * 0.1;
    return Mat6(0.5 * (m + m.transpose()));
  };
  CostWeights w;
  w.Q_hh = psd6() + Mat6::Identity() * 0.1;
  w.Q_rr = psd6() + Mat6::Identity() * 0.1;
  w.Q_hr = psd6();
  w.Q_rh = equal_cross ? w.Q_hr : psd6();
  return w;
}

}  // namespace

TEST_CASE("state space block structure") {
  ImpedanceParams unit{Mat3::Identity(), Mat3::Identity(), Mat3::Identity()};
  const StateSpace s = build_state_space(unit);
  CHECK(s.A.topLeftCorner<3, 3>() == Mat3::Zero());
  CHECK(s.A.topRightCorner<3, 3>() == Mat3::Identity());
  CHECK(s.A.bottomLeftCorner<3, 3>() == -Mat3::Identity());
  CHECK(s.A.bottomRightCorner<3, 3>() == -Mat3::Identity());
  CHECK(s.B.topRows<3>() == Eigen::Matrix<double, 3, 6>::Zero());
  CHECK(s.B.bottomLeftCorner<3, 3>() == Mat3::Identity());
  CHECK(s.B.bottomRightCorner<3, 3>() == Mat3::Identity());

  const StateSpace p = build_state_space(ImpedanceParams{});
  CHECK((p.A.bottomLeftCorner<3, 3>() + 20.0 * Mat3::Identity()).norm() < 1e-15);
  CHECK((p.A.bottomRightCorner<3, 3>() + 10.0 * Mat3::Identity()).norm() < 1e-15);

  ImpedanceParams bad;
  bad.M(1, 1) = 0.0;
  CHECK_THROWS_AS(build_state_space(bad), ConfigError);
}

TEST_CASE("role coefficient from force") {
  CHECK(kappa_from_force(Vec3::Zero(), 0.3) == 0.5);
  CHECK(std::abs(kappa_from_force(Vec3(6, 8, 0), 0.3) - 1.0 / (1.0 + std::exp(-3.0))) < 1e-15);
  CHECK(std::abs(kappa_from_force(Vec3(10, 0, 0), 0.3) - 0.95257) < 1e-5);
  CHECK(std::abs(kappa_from_force(Vec3(0, 40, 0), 0.3) - 1.0) < 1e-5);
  double prev = 0.5;
  for (double f = 0.1; f < 60.0; f += 0.1) {
    const double k = kappa_from_force(Vec3(0, 0, f), 0.3);
    CHECK(k > prev);
    CHECK(k < 1.0);
    prev = k;
  }
}

TEST_CASE("cost blending") {
  const CostWeights w;
  const BlendedCost half = blend_costs(0.5, w);
  CHECK((half.Q - w.Q_hh).norm() < 1e-15);
  Mat6 expect_r = Mat6::Zero();
  expect_r.topLeftCorner<3, 3>() = Mat3::Identity() * 0.00025;
  expect_r.bottomRightCorner<3, 3>() = Mat3::Identity() * 0.00005;
  CHECK((half.R - expect_r).norm() < 1e-18);
  CHECK_THROWS_AS(blend_costs(0.0, w), ConfigError);
  CHECK_THROWS_AS(blend_costs(1.0, w), ConfigError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int trial = 0; trial < 50; ++trial) {
    const CostWeights rw = random_weights(rng, false);
    const BlendedCost c = blend_costs(u(rng), rw);
    CHECK((c.Q - c.Q.transpose()).norm() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Mat6> es(c.Q);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("reference composition limits, equal weighting and translation equivariance") {
  const CostWeights w;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Vec6 yh, yr, shift;
  for (int i = 0; i < 6; ++i) yh(i) = nd(rng), yr(i) = nd(rng);
  shift << nd(rng), nd(rng), nd(rng), 0, 0, 0;

  CHECK((compose_reference(1.0 - 1e-12, yh, yr, w) - yh).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((compose_reference(1e-12, yh, yr, w) - yr).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((compose_reference(0.5, yh, yr, w) - 0.5 * (yh + yr)).cwiseAbs().maxCoeff() < 1e-12);

  for (double k : {0.5, 0.73, 0.95257, 0.999}) {
    const Vec6 base = compose_reference(k, yh, yr, w);
    CHECK((compose_reference(k, yh + shift, yr + shift, w) - (base + shift)).cwiseAbs().maxCoeff() < 1e-9);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const CostWeights rw = random_weights(rng, true);
    const double k = 0.5 + 0.49 * std::abs(std::tanh(nd(rng)));
    const Vec6 base = compose_reference(k, yh, yr, rw);
    CHECK((compose_reference(k, yh + shift, yr + shift, rw) - (base + shift)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("ARE: scalar closed form") {
  const MatX A = MatX::Zero(1, 1), B = MatX::Ones(1, 1), Q = MatX::Ones(1, 1), R = MatX::Ones(1, 1);
  const RiccatiSolution s = solve_are(A, B, Q, R);
  CHECK(std::abs(s.P(0, 0) - 1.0) < 1e-8);
  CHECK(std::abs(s.gain(0, 0) - 1.0) < 1e-8);
}

TEST_CASE("ARE: double integrator closed form") {
  MatX A(2, 2), B(2, 1);
  A << 0, 1, 0, 0;
  B << 0, 1;
  const RiccatiSolution s = solve_are(A, B, MatX::Identity(2, 2), MatX::Ones(1, 1));
  MatX expect(2, 2);
  expect << std::sqrt(3.0), 1, 1, std::sqrt(3.0);
  CHECK((s.P - expect).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(residual_oracle(A, B, MatX::Identity(2, 2), MatX::Ones(1, 1), s.P) < 1e-9);
}

TEST_CASE("ARE: reference parameter set at kappa = 0.5") {
  const StateSpace ss = build_state_space(ImpedanceParams{});
  const BlendedCost c = blend_costs(0.5, CostWeights{});
  const RiccatiSolution s = solve_are(ss.A, ss.B, c.Q, c.R);
  CHECK(residual_oracle(ss.A, ss.B, c.Q, c.R, s.P) < 1e-6);
  CHECK(s.residual < 1e-6);
  CHECK((s.P - s.P.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(Eigen::SelfAdjointEigenSolver<MatX>(s.P).eigenvalues().minCoeff() >= -1e-10);
  CHECK(is_hurwitz(MatX(ss.A) - MatX(ss.B) * s.gain));
  CHECK((s.gain - MatX(c.R).inverse() * MatX(ss.B).transpose() * s.P).norm() < 1e-9 * s.gain.norm());
}

TEST_CASE("ARE: warm start reproduces the cold solution") {
  const StateSpace ss = build_state_space(ImpedanceParams{});
  const BlendedCost c1 = blend_costs(0.5, CostWeights{});
  const BlendedCost c2 = blend_costs(0.9, CostWeights{});
  const RiccatiSolution s1 = solve_are(ss.A, ss.B, c1.Q, c1.R);
  const RiccatiSolution cold = solve_are(ss.A, ss.B, c2.Q, c2.R);
  const RiccatiSolution warm = solve_are(ss.A, ss.B, c2.Q, c2.R, &s1.P);
  CHECK(warm.warm_started);
  CHECK_FALSE(cold.warm_started);
  CHECK((warm.P - cold.P).norm() < 1e-6 * cold.P.norm());
  CHECK(warm.residual < 1e-6);
}

TEST_CASE("ARE: unstabilisable pair is rejected") {
  MatX A(2, 2), B(2, 1);
  A << 1, 0, 0, -1;
  B << 0, 1;
  CHECK_FALSE(stabilizable(A, B));
  CHECK_THROWS_AS(solve_are(A, B, MatX::Identity(2, 2), MatX::Ones(1, 1)), NumericalError);
  A(0, 0) = -1;  // stable but uncontrollable mode is fine
  CHECK(stabilizable(A, B));
  CHECK_NOTHROW(solve_are(A, B, MatX::Identity(2, 2), MatX::Ones(1, 1)));
}

TEST_CASE("LQR gain is optimal against stabilising perturbations") {
  const StateSpace ss = build_state_space(ImpedanceParams{});
  const MatX A = ss.A, B = ss.B;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (double kappa : {0.5, 0.95}) {
    const BlendedCost c = blend_costs(kappa, CostWeights{});
    const MatX Q = c.Q, R = c.R;
    const RiccatiSolution s = solve_are(A, B, Q, R);
    Eigen::VectorXd e0(6);
    e0 << 0.05, -0.03, 0.02, 0.1, 0.0, -0.05;
    const double best = regulation_cost(A, B, Q, R, s.gain, e0, 10.0);
    // The infinite-horizon value bounds the 10 s cost and is essentially reached.
    CHECK(best <= e0.dot(s.P * e0) * (1.0 + 1e-9));
    CHECK(best >= e0.dot(s.P * e0) * (1.0 - 1e-6));
    int accepted = 0;
    while (accepted < 20) {
      MatX dk(6, 6);
      for (Eigen::Index i = 0; i < dk.size(); ++i) dk.data()[i] = nd(rng);
      dk *= 0.1 * s.gain.norm() / dk.norm() * std::uniform_real_distribution<double>(0.05, 1.0)(rng);
      const MatX k = s.gain + dk;
      if (!is_hurwitz(A - B * k)) continue;
      ++accepted;
      CHECK(regulation_cost(A, B, Q, R, k, e0, 10.0) >= best - 1e-9);
    }
  }
}

TEST_CASE("control input: zero error, linearity, restoring sign") {
  const StateSpace ss = build_state_space(ImpedanceParams{});
  const BlendedCost c = blend_costs(0.5, CostWeights{});
  const RiccatiSolution s = solve_are(ss.A, ss.B, c.Q, c.R);
  const Vec6 ref = (Vec6() << 0.1, 0.2, 0.3, 0, 0, 0).finished();
  CHECK(control_input(s, ref, ref).norm() == 0.0);
  const Vec6 e = (Vec6() << 0.01, -0.02, 0.005, 0.1, 0.0, 0.2).finished();
  CHECK((control_input(s, ref + 2.0 * e, ref) - 2.0 * control_input(s, ref + e, ref)).norm() < 1e-12);

  Vec6 y = ref;
  y(0) += 0.01;
  const Vec6 u = control_input(s, y, ref);
  CHECK(u(3) < 0.0);
  // One explicit step of the error dynamics shrinks the x error.
  const Vec6 err = y - ref;
  Vec6 next = err;
  for (int i = 0; i < 10; ++i) next += 0.001 * (ss.A * next + ss.B * control_input(s, next + ref, ref));
  CHECK(std::abs(next(0)) < std::abs(err(0)));
}

TEST_CASE("allocator tick: zero-force collapse, monotone kappa, solve cache, staleness") {
  RoleAllocator alloc(ControllerConfig{});
  const Vec6 y = (Vec6() << 0.0, 0.0, 0.1, 0.0, 0.0, 0.0).finished();
  const Vec6 pred = (Vec6() << 0.01, 0.0, 0.1, 0.05, 0.0, 0.0).finished();

  const auto s0 = alloc.tick(y, Vec3::Zero(), pred, pred, 0.0);
  CHECK(s0.kappa == 0.5);
  const StateSpace ss = build_state_space(ImpedanceParams{});
  const BlendedCost c = blend_costs(0.5, CostWeights{});
  const RiccatiSolution ref = solve_are(ss.A, ss.B, c.Q, c.R);
  const Vec3 expect = (-ref.gain * (y - pred)).tail<3>();
  CHECK((s0.f_r - expect).norm() < 1e-9 * std::max(1.0, expect.norm()));
  CHECK(alloc.solve_count() == 1);

  // A tiny force moves kappa by less than kappa_tol: cached solution reused.
  alloc.tick(y, Vec3(0.005, 0, 0), pred, pred, 0.0);
  CHECK(alloc.solve_count() == 1);
  double prev = alloc.state().kappa;
  for (double f : {1.0, 2.0, 5.0, 10.0}) {
    alloc.tick(y, Vec3(f, 0, 0), pred, pred, 0.0);
    CHECK(alloc.state().kappa > prev);
    CHECK(alloc.state().resolved);
    prev = alloc.state().kappa;
  }
  CHECK(alloc.solve_count() == 5);

  const Vec3 held = alloc.state().f_r;
  const auto& st = alloc.tick(y + Vec6::Constant(0.1), Vec3::Zero(), pred, pred, 0.05);
  CHECK(st.stale);
  CHECK(st.f_r == held);
  CHECK(st.kappa == 0.5);
  CHECK_FALSE(alloc.tick(y, Vec3::Zero(), pred, pred, 0.02).stale);
}

TEST_CASE("allocator tick with a re-solve stays within the control budget") {
  RoleAllocator alloc(ControllerConfig{});
  const Vec6 y = Vec6::Zero(), pred = Vec6::Constant(0.01);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    alloc.tick(y, Vec3(0.2 * i, 0, 0), pred, pred, 0.0);
    worst = std::max(worst, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  MESSAGE("worst tick " << worst * 1e3 << " ms");
  CHECK(worst < 5e-3);
}

TEST_CASE("controller config json") {
  const ControllerConfig def;
  const ControllerConfig back = ControllerConfig::from_json(def.to_json());
  CHECK(back.to_json() == def.to_json());
  CHECK(def.to_json()["M"] == nlohmann::json::array({10.0, 10.0, 10.0}));
  CHECK(def.to_json()["R_h"][0].get<double>() == 0.0005);
  CHECK(ControllerConfig::from_json({{"alpha", 0.5}}).alpha == 0.5);
  CHECK_THROWS_AS(ControllerConfig::from_json({{"beta", 1.0}}), ConfigError);
  CHECK_THROWS_AS(ControllerConfig::from_json({{"M", {1.0, 2.0}}}), ConfigError);
  CHECK_THROWS_AS(ControllerConfig::from_json({{"R_h", {0.0, 1.0, 1.0}}}), ConfigError);
  CHECK_THROWS_AS(ControllerConfig::from_json({{"alpha", "x"}}), ConfigError);
  CHECK_THROWS_AS(ControllerConfig::load("/nonexistent/ctl.json"), ConfigError);
  CHECK_FALSE(def.to_json().contains("fixed_kappa"));
  const ControllerConfig pinned = ControllerConfig::from_json({{"fixed_kappa", 0.5}});
  CHECK(*ControllerConfig::from_json(pinned.to_json()).fixed_kappa == 0.5);
  CHECK_THROWS_AS(ControllerConfig::from_json({{"fixed_kappa", 1.0}}), ConfigError);
}

TEST_CASE("pinned kappa ignores the force") {
  ControllerConfig cfg;
  cfg.fixed_kappa = 0.5;
  RoleAllocator alloc(cfg);
  const Vec6 y = Vec6::Zero(), pred = Vec6::Constant(0.01);
  CHECK(alloc.tick(y, Vec3(12.0, 0, 0), pred, pred, 0.0).kappa == 0.5);
  CHECK(alloc.solve_count() == 1);
}
