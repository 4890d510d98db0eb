#include "phrc/sim/metrics.hpp"

#include "phrc/core/error.hpp"

#include <cmath>
#include <numbers>

namespace phrc::sim {

namespace {

void check_lengths(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.size() != gt.size()) throw ValidationError("prediction and ground truth differ in length");
  if (pred.empty()) throw ValidationError("empty prediction");
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

double metric_ade_mm(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  check_lengths(pred, gt);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - gt[i]).norm();
  return 1e3 * acc / static_cast<double>(pred.size());
}

double metric_fde_mm(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  check_lengths(pred, gt);
  return 1e3 * (pred.back() - gt.back()).norm();
}

nlohmann::json PhrcMetrics::to_json() const {
  return {{"theta", opt(theta_deg)}, {"iasst", opt(i_asst)}, {"mu", opt(mu)}, {"work", work_j},
          {"included", included}};
}

PhrcMetrics PhrcMetrics::from_json(const nlohmann::json& j) {
  PhrcMetrics m;
  m.theta_deg = opt_from(j, "theta");
  m.i_asst = opt_from(j, "iasst");
  m.mu = opt_from(j, "mu");
  m.work_j = j.at("work").get<double>();
  m.included = j.at("included").get<std::size_t>();
  return m;
}

PhrcMetrics metric_phrc(const ForceTrace& trace, bool guided_only) {
  const std::size_t n = trace.pos.size();
  if (trace.f_h.size() != n || trace.f_r.size() != n) throw ValidationError("force trace columns differ in length");
  PhrcAccumulator acc(guided_only);
  for (std::size_t k = 0; k < n; ++k) acc.push(trace.pos[k], trace.f_h[k], trace.f_r[k]);
  return acc.summary();
}

void PhrcAccumulator::push(const Vec3& pos, const Vec3& fh, const Vec3& fr) {
  if (has_prev_) work_ += prev_fh_.dot(pos - prev_pos_);
  has_prev_ = true;
  prev_pos_ = pos;
  prev_fh_ = fh;
  const double nh = fh.norm(), nr = fr.norm();
  if (guided_only_ ? !(nh > kGuidedForce) : nh == 0.0) return;
  if (nr == 0.0) return;
  // atan2 form of arccos(f_r.f_h / |f_r||f_h|); stays accurate near 0 and 180 degrees.
  const double rad = std::atan2(fr.cross(fh).norm(), fr.dot(fh));
  theta_sum_ += rad * 180.0 / std::numbers::pi;
  proj_sum_ += fr.dot(fh) / nh;
  if (rad < 0.5 * std::numbers::pi) ++acute_;
  ++included_;
}

PhrcMetrics PhrcAccumulator::summary() const {
  PhrcMetrics m;
  m.work_j = work_;
  m.included = included_;
  if (included_ > 0) {
    const double cnt = static_cast<double>(included_);
    m.theta_deg = theta_sum_ / cnt;
    m.i_asst = proj_sum_ / cnt;
    m.mu = static_cast<double>(acute_) / cnt;
  }
  return m;
}

}  // namespace phrc::sim
