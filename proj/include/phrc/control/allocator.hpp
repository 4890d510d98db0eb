#pragma once

#include "phrc/core/types.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <optional>

namespace phrc::control {

using MatX = Eigen::MatrixXd;

struct ImpedanceParams {
  Mat3 M = Mat3::Identity() * 10.0;
  Mat3 D = Mat3::Identity() * 100.0;
  Mat3 K = Mat3::Identity() * 200.0;

  void validate() const;
};

struct CostWeights {
  Mat6 Q_hh = Vec6(1, 1, 1, 1e-4, 1e-4, 1e-4).asDiagonal();
  Mat6 Q_hr = Mat6::Zero();
  Mat6 Q_rh = Mat6::Zero();
  Mat6 Q_rr = Vec6(1, 1, 1, 1e-4, 1e-4, 1e-4).asDiagonal();
  Mat3 R_h = Mat3::Identity() * 5e-4;
  Mat3 R_r = Mat3::Identity() * 1e-4;

  /// Symmetry within 1e-12, Q blocks PSD and R blocks PD.
  void validate() const;
};

/// Flat controller document; defaults are the experimental values of the
/// reference setup.
struct ControllerConfig {
  ImpedanceParams impedance;
  CostWeights weights;
  double alpha = 0.3;
  double kappa_tol = 1e-3;
  double control_hz = 100.0;
  double predict_hz = 50.0;
  /// When set, kappa is pinned to this value instead of following the force.
  std::optional<double> fixed_kappa;

  void validate() const;
  /// Keys M, D, K (3-arrays), Q_hh, Q_hr, Q_rh, Q_rr (6-arrays, diagonal),
  /// R_h, R_r (3-arrays), alpha, kappa_tol, control_hz, predict_hz and the
  /// optional fixed_kappa.
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ControllerConfig from_json(const nlohmann::json& j);
  static ControllerConfig load(const std::filesystem::path& path);
};

/// Y' = A Y + B u with Y = [pos, vel] and u = [f_h, f_r].
struct StateSpace {
  Mat6 A;
  Mat6 B;
};

StateSpace build_state_space(const ImpedanceParams& imp);

/// Sigmoid of the force magnitude: 1 / (1 + exp(-alpha |f|)).
double kappa_from_force(const Vec3& f, double alpha);

struct BlendedCost {
  Mat6 Q;
  Mat6 R;
};

/// Q = k(Q_hh + Q_hr) + (1-k)(Q_rh + Q_rr), R = diag(k R_h, (1-k) R_r).
BlendedCost blend_costs(double kappa, const CostWeights& w);

/// Q^-1 (Q_h y_h + Q_r y_r) with Q_h = k Q_hh + (1-k) Q_hr and
/// Q_r = k Q_rh + (1-k) Q_rr.
Vec6 compose_reference(double kappa, const Vec6& y_h, const Vec6& y_r, const CostWeights& w);

struct RiccatiSolution {
  MatX P;
  MatX gain;  // R^-1 B^T P
  double residual = 0.0;
  int iterations = 0;
  bool warm_started = false;
};

/// Frobenius norm of P A + A^T P + Q - P B R^-1 B^T P.
double are_residual(const MatX& A, const MatX& B, const MatX& Q, const MatX& R, const MatX& P);

/// Stabilising solution of the continuous-time algebraic Riccati equation.
///
/// Cold solves take the stable invariant subspace of the Hamiltonian and then
/// polish with Newton-Kleinman steps; a warm start skips the eigen-solve when
/// the given P still stabilises the closed loop. Throws NumericalError when
/// (A, B) is not stabilisable or the residual does not fall below 1e-6.
RiccatiSolution solve_are(const MatX& A, const MatX& B, const MatX& Q, const MatX& R,
                          const MatX* warm = nullptr);

/// True when (A, B) passes the PBH test on every eigenvalue with Re >= 0.
bool stabilizable(const MatX& A, const MatX& B);

/// u = -gain (y - y_ref), stacked [f_h, f_r].
Vec6 control_input(const RiccatiSolution& sol, const Vec6& y, const Vec6& y_ref);

struct AllocationState {
  double kappa = 0.5;
  Vec6 y_ref = Vec6::Zero();
  Vec6 u = Vec6::Zero();  // [modelled human effort, robot effort]
  Vec3 f_r = Vec3::Zero();
  bool stale = false;
  bool resolved = false;
};

/// Per-tick role allocation: kappa from the measured force, cost blending,
/// cached ARE solve, reference composition and the robot effort.
class RoleAllocator {
 public:
  explicit RoleAllocator(ControllerConfig cfg);

  /// `prediction_age` is the time since the predictions were produced. When
  /// it exceeds one prediction period the previous robot effort is held and
  /// the result is flagged stale.
  const AllocationState& tick(const Vec6& y, const Vec3& f_h_measured, const Vec6& y_hat_h, const Vec6& y_hat_r,
                              double prediction_age);

  const ControllerConfig& config() const noexcept { return cfg_; }
  const AllocationState& state() const noexcept { return state_; }
  const RiccatiSolution& solution() const;
  long solve_count() const noexcept { return solves_; }
  void set_alpha(double alpha);

 private:
  void ensure_solution(double kappa);

  ControllerConfig cfg_;
  StateSpace ss_;
  std::optional<RiccatiSolution> sol_;
  double solved_kappa_ = 0.0;
  long solves_ = 0;
  AllocationState state_;
};

}  // namespace phrc::control
