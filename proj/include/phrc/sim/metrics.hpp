#pragma once

#include "phrc/core/types.hpp"

#include <json.hpp>

#include <optional>
#include <span>

namespace phrc::sim {

/// Force threshold (N) above which a tick counts as human-guided.
inline constexpr double kGuidedForce = 0.5;

/// Mean and final L2 position error in millimetres. Both sequences hold
/// positions only and must have equal, non-zero length.
double metric_ade_mm(std::span<const Vec3> pred, std::span<const Vec3> gt);
double metric_fde_mm(std::span<const Vec3> pred, std::span<const Vec3> gt);

struct PhrcMetrics {
  std::optional<double> theta_deg;  // mean angle between f_r and f_h
  std::optional<double> i_asst;     // mean projection of f_r on f_h
  std::optional<double> mu;         // fraction of included ticks with theta < 90 deg
  double work_j = 0.0;              // sum of f_h . dx over every tick
  std::size_t included = 0;

  nlohmann::json to_json() const;
  static PhrcMetrics from_json(const nlohmann::json& j);
};

/// Per-tick quantities the pHRC metrics need.
struct ForceTrace {
  std::span<const Vec3> pos;
  std::span<const Vec3> f_h;
  std::span<const Vec3> f_r;
};

/// With `guided_only`, angle metrics use ticks where |f_h| > kGuidedForce.
/// Otherwise every tick with non-zero f_h and f_r is used (the angle is
/// undefined for a zero force). W sums f_h(k) . (x(k+1) - x(k)).
PhrcMetrics metric_phrc(const ForceTrace& trace, bool guided_only);

/// Streaming form of metric_phrc: push ticks in order, read the summary at
/// any point. The work term of a tick is booked when the next tick arrives.
class PhrcAccumulator {
 public:
  explicit PhrcAccumulator(bool guided_only) : guided_only_(guided_only) {}

  void push(const Vec3& pos, const Vec3& f_h, const Vec3& f_r);
  PhrcMetrics summary() const;

 private:
  bool guided_only_;
  bool has_prev_ = false;
  Vec3 prev_pos_ = Vec3::Zero();
  Vec3 prev_fh_ = Vec3::Zero();
  double work_ = 0.0, theta_sum_ = 0.0, proj_sum_ = 0.0;
  std::size_t acute_ = 0, included_ = 0;
};

}  // namespace phrc::sim
