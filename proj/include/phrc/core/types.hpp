#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phrc {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

enum class Branch { Robot, Human };
enum class Label { ObstacleFree, ObstacleAvoid };

std::string to_string(Branch b);
std::string to_string(Label l);
Branch parse_branch(const std::string& s);
Label parse_label(const std::string& s);

struct StateSample {
  double t = 0.0;
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  std::optional<Vec3> force;

  /// Position and velocity stacked as [pos, vel].
  Vec6 state() const;
};

/// Uniformly sampled end-effector trajectory. Validated on construction.
class Trajectory {
 public:
  static constexpr double kTimeTolerance = 1e-9;

  Trajectory(Branch branch, double dt, std::vector<StateSample> samples,
             Label label = Label::ObstacleFree);

  Branch branch() const noexcept { return branch_; }
  double dt() const noexcept { return dt_; }
  Label label() const noexcept { return label_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const std::vector<StateSample>& samples() const noexcept { return samples_; }
  const StateSample& operator[](std::size_t i) const { return samples_[i]; }

 private:
  Branch branch_;
  double dt_;
  std::vector<StateSample> samples_;
  Label label_;
};

/// Past window ends at T_now (inclusive); future holds the samples strictly after.
struct WindowPair {
  std::span<const StateSample> past;
  std::span<const StateSample> future;

  double t_now() const { return past.back().t; }
};

/// Every window with `l_obs` past and `l_fut` future samples, stepping the
/// past-end index by `stride`. Returns an empty list when `traj` is too short.
std::vector<WindowPair> slice_windows(const Trajectory& traj, std::size_t l_obs,
                                      std::size_t l_fut, std::size_t stride = 1);

/// max(0, floor((n - l_obs - l_fut) / stride) + 1)
std::size_t window_count(std::size_t n, std::size_t l_obs, std::size_t l_fut,
                         std::size_t stride);

}  // namespace phrc
