#include "phrc/nn/adam.hpp"

#include "phrc/core/error.hpp"

#include <cmath>

namespace phrc::nn {

AdamMoments AdamMoments::zeros_like(const ParamStore& store) {
  AdamMoments mo;
  for (const auto& t : store.tensors()) {
    mo.m.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
    mo.v.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
  }
  return mo;
}

bool adam_step(ParamStore& params, AdamMoments& moments, const AdamConfig& cfg, long t) {
  if (t < 1) throw ConfigError("adam_step: t must be >= 1");
  if (moments.m.size() != params.size() || moments.v.size() != params.size())
    throw ConfigError("adam_step: moment buffers not allocated for this store");
  if (!params.grads_finite()) return false;

  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = params.tensors()[i];
    Mat& m = moments.m[i];
    Mat& v = moments.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
  return true;
}

Adam::Adam(const ParamStore& params, AdamConfig cfg)
    : cfg_(cfg), moments_(AdamMoments::zeros_like(params)) {}

bool Adam::step(ParamStore& params) {
  if (!adam_step(params, moments_, cfg_, t_ + 1)) {
    ++skipped_;
    return false;
  }
  ++t_;
  return true;
}

}  // namespace phrc::nn
