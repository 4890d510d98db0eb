#include "phrc/control/allocator.hpp"

#include "phrc/core/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <set>

namespace phrc::control {

namespace {

using CMat = Eigen::MatrixXcd;

constexpr double kSymTol = 1e-12;
constexpr double kAcceptResidual = 1e-6;
constexpr double kTargetResidual = 1e-9;
constexpr int kMaxIterations = 100;

bool positive_diagonal(const Mat3& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j && !(m(i, i) > 0.0)) return false;
      if (i != j && m(i, j) != 0.0) return false;
    }
  return true;
}

template <typename Derived>
void check_symmetric_semidefinite(const Eigen::MatrixBase<Derived>& m, bool strict, const char* name) {
  if (!m.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymTol) throw ConfigError(std::string(name) + " is not symmetric");
  const Eigen::SelfAdjointEigenSolver<MatX> es(MatX(m), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (strict ? !(lo > 0.0) : lo < -1e-12 * scale)
    throw ConfigError(std::string(name) + (strict ? " is not positive definite" : " is not positive semidefinite"));
}

bool hurwitz(const MatX& a) {
  const Eigen::EigenSolver<MatX> es(a, false);
  return (es.eigenvalues().real().array() < 0.0).all();
}

// Solves A^T X + X A + C = 0 through the Kronecker form.
MatX lyapunov(const MatX& a, const MatX& c) {
  const Eigen::Index n = a.rows();
  MatX big = MatX::Zero(n * n, n * n);
  const MatX at = a.transpose();
  // vec(A^T X) = (I kron A^T) vec X ; vec(X A) = (A^T kron I) vec X
  for (Eigen::Index j = 0; j < n; ++j) {
    big.block(j * n, j * n, n, n) += at;
    for (Eigen::Index i = 0; i < n; ++i) big.block(j * n, i * n, n, n).diagonal().array() += at(j, i);
  }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(c.data(), n * n);
  const Eigen::VectorXd x = big.partialPivLu().solve(rhs);
  MatX out = Eigen::Map<const MatX>(x.data(), n, n);
  return 0.5 * (out + out.transpose());
}

MatX hamiltonian_solution(const MatX& A, const MatX& S, const MatX& Q) {
  const Eigen::Index n = A.rows();
  MatX H(2 * n, 2 * n);
  H << A, -S, -Q, -A.transpose();
  const Eigen::EigenSolver<MatX> es(H);
  if (es.info() != Eigen::Success) throw NumericalError("ARE: Hamiltonian eigen-decomposition failed");
  CMat U(2 * n, n);
  Eigen::Index cols = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (cols == n) throw NumericalError("ARE: Hamiltonian has more than n stable eigenvalues");
      U.col(cols++) = es.eigenvectors().col(i);
    }
  }
  if (cols != n) throw NumericalError("ARE: Hamiltonian has eigenvalues on the imaginary axis");
  const CMat U1 = U.topRows(n), U2 = U.bottomRows(n);
  const Eigen::PartialPivLU<CMat> lu(U1);
  if (std::abs(lu.determinant()) < 1e-300) throw NumericalError("ARE: stable subspace is not a graph");
  // P U1 = U2  <=>  U1^T P^T = U2^T
  const CMat Pt = U1.transpose().partialPivLu().solve(U2.transpose());
  MatX P = Pt.transpose().real();
  return 0.5 * (P + P.transpose());
}

std::vector<double> diag_array(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, i);
  return out;
}

template <int N>
Eigen::Matrix<double, N, N> diag_from(const nlohmann::json& j, const char* key) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != N)
    throw ConfigError(std::string("controller key ") + key + " needs " + std::to_string(N) + " entries");
  Eigen::Matrix<double, N, 1> d;
  for (int i = 0; i < N; ++i) d(i) = v[static_cast<std::size_t>(i)];
  return d.asDiagonal();
}

}  // namespace

void ImpedanceParams::validate() const {
  if (!positive_diagonal(M) || !positive_diagonal(D) || !positive_diagonal(K))
    throw ConfigError("impedance M, D, K must be diagonal with positive entries");
}

void CostWeights::validate() const {
  check_symmetric_semidefinite(Q_hh, false, "Q_hh");
  check_symmetric_semidefinite(Q_hr, false, "Q_hr");
  check_symmetric_semidefinite(Q_rh, false, "Q_rh");
  check_symmetric_semidefinite(Q_rr, false, "Q_rr");
  check_symmetric_semidefinite(R_h, true, "R_h");
  check_symmetric_semidefinite(R_r, true, "R_r");
}

void ControllerConfig::validate() const {
  impedance.validate();
  weights.validate();
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(kappa_tol >= 0.0)) throw ConfigError("kappa_tol must be non-negative");
  if (!(control_hz > 0.0) || !(predict_hz > 0.0) || predict_hz > control_hz)
    throw ConfigError("need 0 < predict_hz <= control_hz");
  if (fixed_kappa && !(*fixed_kappa > 0.0 && *fixed_kappa < 1.0))
    throw ConfigError("fixed_kappa must lie strictly inside (0, 1)");
}

nlohmann::json ControllerConfig::to_json() const {
  nlohmann::json j = {{"M", diag_array(impedance.M)},     {"D", diag_array(impedance.D)},    {"K", diag_array(impedance.K)},
          {"Q_hh", diag_array(weights.Q_hh)}, {"Q_hr", diag_array(weights.Q_hr)}, {"Q_rh", diag_array(weights.Q_rh)},
          {"Q_rr", diag_array(weights.Q_rr)}, {"R_h", diag_array(weights.R_h)},   {"R_r", diag_array(weights.R_r)},
          {"alpha", alpha},                   {"kappa_tol", kappa_tol},          {"control_hz", control_hz},
          {"predict_hz", predict_hz}};
  if (fixed_kappa) j["fixed_kappa"] = *fixed_kappa;
  return j;
}

ControllerConfig ControllerConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("controller config must be a JSON object");
  static const std::set<std::string> known{"M",   "D",   "K",     "Q_hh",      "Q_hr",       "Q_rh",      "Q_rr",
                                           "R_h", "R_r", "alpha", "kappa_tol", "control_hz", "predict_hz",
                                           "fixed_kappa"};
  ControllerConfig c;
  try {
    for (const auto& [key, val] : j.items()) {
      if (!known.count(key)) throw ConfigError("unknown controller key '" + key + "'");
      if (key == "M") c.impedance.M = diag_from<3>(val, "M");
      if (key == "D") c.impedance.D = diag_from<3>(val, "D");
      if (key == "K") c.impedance.K = diag_from<3>(val, "K");
      if (key == "Q_hh") c.weights.Q_hh = diag_from<6>(val, "Q_hh");
      if (key == "Q_hr") c.weights.Q_hr = diag_from<6>(val, "Q_hr");
      if (key == "Q_rh") c.weights.Q_rh = diag_from<6>(val, "Q_rh");
      if (key == "Q_rr") c.weights.Q_rr = diag_from<6>(val, "Q_rr");
      if (key == "R_h") c.weights.R_h = diag_from<3>(val, "R_h");
      if (key == "R_r") c.weights.R_r = diag_from<3>(val, "R_r");
      if (key == "alpha") c.alpha = val.get<double>();
      if (key == "kappa_tol") c.kappa_tol = val.get<double>();
      if (key == "control_hz") c.control_hz = val.get<double>();
      if (key == "predict_hz") c.predict_hz = val.get<double>();
      if (key == "fixed_kappa" && !val.is_null()) c.fixed_kappa = val.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("controller config: ") + e.what());
  }
  c.validate();
  return c;
}

ControllerConfig ControllerConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open controller config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("controller config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

StateSpace build_state_space(const ImpedanceParams& imp) {
  const Eigen::FullPivLU<Mat3> lu(imp.M);
  if (!lu.isInvertible()) throw ConfigError("inertia matrix M is singular");
  const Mat3 Minv = lu.inverse();
  StateSpace ss;
  ss.A.setZero();
  ss.A.topRightCorner<3, 3>().setIdentity();
  ss.A.bottomLeftCorner<3, 3>() = -Minv * imp.K;
  ss.A.bottomRightCorner<3, 3>() = -Minv * imp.D;
  ss.B.setZero();
  ss.B.bottomLeftCorner<3, 3>() = Minv;
  ss.B.bottomRightCorner<3, 3>() = Minv;
  return ss;
}

double kappa_from_force(const Vec3& f, double alpha) { return 1.0 / (1.0 + std::exp(-alpha * f.norm())); }

BlendedCost blend_costs(double kappa, const CostWeights& w) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie strictly inside (0, 1)");
  BlendedCost c;
  c.Q = kappa * (w.Q_hh + w.Q_hr) + (1.0 - kappa) * (w.Q_rh + w.Q_rr);
  c.R.setZero();
  c.R.topLeftCorner<3, 3>() = kappa * w.R_h;
  c.R.bottomRightCorner<3, 3>() = (1.0 - kappa) * w.R_r;
  check_symmetric_semidefinite(c.Q, false, "blended Q");
  check_symmetric_semidefinite(c.R, true, "blended R");
  return c;
}

Vec6 compose_reference(double kappa, const Vec6& y_h, const Vec6& y_r, const CostWeights& w) {
  const Mat6 Q = kappa * (w.Q_hh + w.Q_hr) + (1.0 - kappa) * (w.Q_rh + w.Q_rr);
  const Mat6 Qh = kappa * w.Q_hh + (1.0 - kappa) * w.Q_hr;
  const Mat6 Qr = kappa * w.Q_rh + (1.0 - kappa) * w.Q_rr;
  const Eigen::FullPivLU<Mat6> lu(Q);
  if (!lu.isInvertible()) throw NumericalError("blended tracking weight is singular");
  return lu.solve(Qh * y_h + Qr * y_r);
}

double are_residual(const MatX& A, const MatX& B, const MatX& Q, const MatX& R, const MatX& P) {
  const MatX BRB = B * R.llt().solve(B.transpose());
  return (P * A + A.transpose() * P + Q - P * BRB * P).norm();
}

bool stabilizable(const MatX& A, const MatX& B) {
  const Eigen::Index n = A.rows();
  const Eigen::EigenSolver<MatX> es(A, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (lambda.real() < 0.0) continue;
    CMat pbh(n, n + B.cols());
    pbh.leftCols(n) = A.cast<std::complex<double>>() - lambda * CMat::Identity(n, n);
    pbh.rightCols(B.cols()) = B.cast<std::complex<double>>();
    const Eigen::JacobiSVD<CMat> svd(pbh);
    const auto& sv = svd.singularValues();
    const double tol = 1e-9 * std::max(1.0, sv(0));
    if ((sv.array() > tol).count() < n) return false;
  }
  return true;
}

RiccatiSolution solve_are(const MatX& A, const MatX& B, const MatX& Q, const MatX& R, const MatX* warm) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() || R.cols() != B.cols())
    throw ConfigError("ARE: inconsistent matrix shapes");
  check_symmetric_semidefinite(Q, false, "ARE Q");
  check_symmetric_semidefinite(R, true, "ARE R");
  if (!stabilizable(A, B)) throw NumericalError("ARE: (A, B) is not stabilisable");

  const Eigen::LLT<MatX> rllt(R);
  const MatX RinvBt = rllt.solve(B.transpose());
  const MatX S = B * RinvBt;

  RiccatiSolution sol;
  if (warm && warm->rows() == n && warm->cols() == n && hurwitz(A - S * *warm)) {
    sol.P = *warm;
    sol.warm_started = true;
  } else {
    sol.P = hamiltonian_solution(A, S, Q);
  }
  sol.residual = are_residual(A, B, Q, R, sol.P);

  // Newton-Kleinman polish; each step needs a stabilising iterate.
  while (sol.residual > kTargetResidual && sol.iterations < kMaxIterations) {
    const MatX gain = RinvBt * sol.P;
    const MatX acl = A - B * gain;
    if (!hurwitz(acl)) break;
    MatX next = lyapunov(acl, Q + gain.transpose() * R * gain);
    const double r = are_residual(A, B, Q, R, next);
    ++sol.iterations;
    if (!(r < sol.residual)) {
      if (sol.residual < kAcceptResidual) break;  // at round-off level
      sol.P = std::move(next);
      sol.residual = r;
      continue;
    }
    sol.P = std::move(next);
    sol.residual = r;
  }
  if (!(sol.residual < kAcceptResidual))
    throw NumericalError("ARE did not converge: residual " + std::to_string(sol.residual) + " after " +
                         std::to_string(sol.iterations) + " iterations");
  sol.gain = RinvBt * sol.P;
  if (!hurwitz(A - B * sol.gain)) throw NumericalError("ARE solution does not stabilise the closed loop");
  return sol;
}

Vec6 control_input(const RiccatiSolution& sol, const Vec6& y, const Vec6& y_ref) {
  if (sol.gain.rows() != 6 || sol.gain.cols() != 6) throw ConfigError("control_input expects a 6x6 gain");
  return -sol.gain * (y - y_ref);
}

RoleAllocator::RoleAllocator(ControllerConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  ss_ = build_state_space(cfg_.impedance);
}

const RiccatiSolution& RoleAllocator::solution() const {
  if (!sol_) throw ConfigError("allocator has not solved yet");
  return *sol_;
}

void RoleAllocator::set_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  cfg_.alpha = alpha;
}

void RoleAllocator::ensure_solution(double kappa) {
  if (sol_ && std::abs(kappa - solved_kappa_) <= cfg_.kappa_tol) {
    state_.resolved = false;
    return;
  }
  const BlendedCost c = blend_costs(kappa, cfg_.weights);
  const MatX* warm = sol_ ? &sol_->P : nullptr;
  sol_ = solve_are(ss_.A, ss_.B, c.Q, c.R, warm);
  solved_kappa_ = kappa;
  ++solves_;
  state_.resolved = true;
}

const AllocationState& RoleAllocator::tick(const Vec6& y, const Vec3& f_h_measured, const Vec6& y_hat_h,
                                           const Vec6& y_hat_r, double prediction_age) {
  state_.kappa = cfg_.fixed_kappa ? *cfg_.fixed_kappa : kappa_from_force(f_h_measured, cfg_.alpha);
  const double period = 1.0 / cfg_.predict_hz;
  state_.stale = prediction_age > period * (1.0 + 1e-9);
  state_.resolved = false;
  if (state_.stale) return state_;  // hold the previous effort
  ensure_solution(state_.kappa);
  state_.y_ref = compose_reference(state_.kappa, y_hat_h, y_hat_r, cfg_.weights);
  state_.u = control_input(*sol_, y, state_.y_ref);
  state_.f_r = state_.u.tail<3>();
  return state_;
}

}  // namespace phrc::control
