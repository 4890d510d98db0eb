#pragma once

#include "phrc/intent/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace phrc::intent {

struct EvalConfig {
  std::size_t samples = 20;  // best-of-N draws
  std::size_t every = 1;     // keep every n-th window of the corpus
  std::uint64_t seed = 0;

  void validate() const;
};

/// Errors in metres for one test window.
struct WindowEval {
  std::size_t traj = 0;
  std::size_t start = 0;  // window index inside its trajectory
  double ml_ade = 0.0, ml_fde = 0.0;
  double bo_ade = 0.0, bo_fde = 0.0;
  double cv_ade = 0.0, cv_fde = 0.0;
};

/// Means in millimetres.
struct EvalSummary {
  std::size_t windows = 0;
  double ml_ade_mm = 0.0, ml_fde_mm = 0.0;
  double bo_ade_mm = 0.0, bo_fde_mm = 0.0;
  double cv_ade_mm = 0.0, cv_fde_mm = 0.0;
  /// Share of windows whose best-of-N ADE is <= the most-likely ADE.
  double bo_le_ml = 0.0;
};

struct EvalResult {
  std::size_t samples = 0;
  std::vector<WindowEval> windows;

  EvalSummary summary() const;
  /// Table with best-of-N and most-likely ADE/FDE columns plus the
  /// constant-velocity baseline.
  void write_table(std::ostream& out, const std::string& name) const;
  /// `method,ade_mm,fde_mm,windows` rows (best_of_N, most_likely, const_vel),
  /// then `bo_le_ml,<share>`.
  void write_csv(std::ostream& out) const;
};

/// Scores every kept window of the trajectories matching the model's branch
/// (others are rejected). Best-of-N draws are seeded per window from
/// (seed, trajectory, window), so a subset evaluates identically.
EvalResult evaluate(const BranchModel& model, const std::vector<Trajectory>& trajs, const EvalConfig& cfg);

}  // namespace phrc::intent
