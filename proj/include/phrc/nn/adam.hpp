#pragma once

#include "phrc/nn/graph.hpp"

#include <vector>

namespace phrc::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers, one pair per parameter tensor.
struct AdamMoments {
  std::vector<Mat> m;
  std::vector<Mat> v;

  static AdamMoments zeros_like(const ParamStore& store);
};

/// Bias-corrected Adam update at step `t` (t >= 1), applied in place using
/// each tensor's accumulated grad. When any gradient is non-finite nothing is
/// mutated (parameters nor moments) and false is returned.
bool adam_step(ParamStore& params, AdamMoments& moments, const AdamConfig& cfg, long t);

/// Convenience wrapper that owns the moments and the step counter. Skipped
/// steps do not advance the counter.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg);

  bool step(ParamStore& params);
  long steps() const noexcept { return t_; }
  long skipped() const noexcept { return skipped_; }
  AdamConfig& config() noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  AdamMoments moments_;
  long t_ = 0;
  long skipped_ = 0;
};

}  // namespace phrc::nn
