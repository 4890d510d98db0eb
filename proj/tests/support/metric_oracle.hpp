#pragma once

// Straight-line re-implementations of the evaluation metrics, written from
// the definitions with explicit component arithmetic.

#include "phrc/sim/episode.hpp"

#include <cmath>
#include <numbers>

namespace phrc::testing {

struct OracleMetrics {
  double theta = 0, iasst = 0, mu = 0, work = 0;
  int included = 0;
};

inline OracleMetrics oracle_metrics(const sim::EpisodeLog& log) {
  OracleMetrics o;
  const auto& t = log.ticks;
  double th = 0, ia = 0;
  int acute = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double hx = t[k].f_h.x(), hy = t[k].f_h.y(), hz = t[k].f_h.z();
    const double rx = t[k].f_r.x(), ry = t[k].f_r.y(), rz = t[k].f_r.z();
    if (k + 1 < t.size()) {
      o.work += hx * (t[k + 1].x.x() - t[k].x.x());
      o.work += hy * (t[k + 1].x.y() - t[k].x.y());
      o.work += hz * (t[k + 1].x.z() - t[k].x.z());
    }
    const double nh = std::sqrt(hx * hx + hy * hy + hz * hz);
    const double nr = std::sqrt(rx * rx + ry * ry + rz * rz);
    if (nh <= 0.5 || nr == 0.0) continue;
    const double dot = rx * hx + ry * hy + rz * hz;
    const double cx = ry * hz - rz * hy, cy = rz * hx - rx * hz, cz = rx * hy - ry * hx;
    const double ang = std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
    th += ang / std::numbers::pi * 180.0;
    ia += dot / nh;
    if (dot > 0.0) ++acute;
    ++o.included;
  }
  if (o.included) {
    o.theta = th / o.included;
    o.iasst = ia / o.included;
    o.mu = static_cast<double>(acute) / o.included;
  }
  return o;
}

// Mean and final Euclidean displacement in metres, componentwise.
inline double oracle_ade(const intent::Prediction& pred, std::span<const StateSample> gt) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i](0) - gt[i].pos(0), dy = pred[i](1) - gt[i].pos(1), dz = pred[i](2) - gt[i].pos(2);
    s += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return s / static_cast<double>(pred.size());
}

inline double oracle_fde(const intent::Prediction& pred, std::span<const StateSample> gt) {
  const std::size_t i = pred.size() - 1;
  const double dx = pred[i](0) - gt[i].pos(0), dy = pred[i](1) - gt[i].pos(1), dz = pred[i](2) - gt[i].pos(2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace phrc::testing
