#include "phrc/bridge/session.hpp"

#include "phrc/core/error.hpp"
#include "phrc/sim/policy.hpp"

#include <cmath>

namespace phrc::bridge {

namespace {

nlohmann::json vec_json(const auto& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

double finite_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) throw ValidationError(std::string("'") + key + "' must be a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw ValidationError(std::string("'") + key + "' must be finite");
  return v;
}

nlohmann::json decimate(const intent::Prediction& p, std::size_t stride) {
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t i = 0; i < p.size(); i += stride) a.push_back(vec_json(Vec3(p[i].head<3>())));
  return a;
}

}  // namespace

void BridgeConfig::validate() const {
  if (!(frame_hz > 0.0) || !(hold_s >= 0.0) || !(liveness_s > 0.0))
    throw ConfigError("bridge frame rate, hold and liveness must be positive");
  if (pred_stride == 0) throw ConfigError("prediction stride must be at least 1");
}

std::string error_frame(std::string_view msg) {
  return nlohmann::json{{"type", "error"}, {"msg", std::string(msg)}}.dump();
}

BridgeSession::BridgeSession(sim::Predictors predictors, control::ControllerConfig cfg, sim::Scenario sc,
                             BridgeConfig bc, double now)
    : predictors_(std::move(predictors)), cfg_(std::move(cfg)), bc_(bc), last_seen_(now) {
  bc_.validate();
  if (bc_.frame_hz > cfg_.control_hz) throw ConfigError("frame rate exceeds the control rate");
  restart(sc);
}

void BridgeSession::restart(const sim::Scenario& sc) {
  loop_ = std::make_unique<sim::ClosedLoop>(sc, cfg_, predictors_);
  acc_ = sim::PhrcAccumulator(true);
  last_ = sim::EpisodeTick{};
  last_.x = sc.start;
  last_.y_ref << sc.start, Vec3::Zero();
  force_.setZero();
  force_at_ = -1e300;
  ticks_ = 0;
}

Vec3 BridgeSession::applied_force(double now) const {
  if (now - force_at_ > bc_.hold_s) return Vec3::Zero();
  return force_;
}

std::optional<std::string> BridgeSession::on_message(std::string_view text, double now) {
  last_seen_ = now;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
      throw ValidationError("message needs a string 'type'");
    const std::string type = j.at("type").get<std::string>();
    if (type == "force") {
      const Vec3 f(finite_number(j, "fx"), finite_number(j, "fy"), finite_number(j, "fz"));
      force_ = sim::clamp_norm(f, loop_->scenario().f_max);
      force_at_ = now;
    } else if (type == "reset") {
      if (j.contains("scenario")) {
        if (!j.at("scenario").is_string()) throw ValidationError("'scenario' must be a string");
        restart(sim::scenario_by_name(j.at("scenario").get<std::string>()));
      } else {
        restart(loop_->scenario());
      }
    } else if (type == "config") {
      const double a = finite_number(j, "alpha");
      if (!(a > 0.0)) throw ValidationError("alpha must be positive");
      loop_->set_alpha(a);
      cfg_.alpha = a;
    } else {
      throw ValidationError("unknown message type '" + type + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    return error_frame(std::string("malformed message: ") + e.what());
  } catch (const std::exception& e) {
    return error_frame(e.what());
  }
  return std::nullopt;
}

std::optional<std::string> BridgeSession::tick(double now) {
  try {
    last_ = loop_->step(applied_force(now));
  } catch (const std::exception& e) {
    const std::string msg = std::string("simulation reset: ") + e.what();
    restart(loop_->scenario());
    return error_frame(msg);
  }
  acc_.push(last_.x, last_.f_h, last_.f_r);
  ++ticks_;
  const double ratio = bc_.frame_hz / cfg_.control_hz;
  const double n = static_cast<double>(ticks_);
  if (std::floor(n * ratio) <= std::floor((n - 1.0) * ratio)) return std::nullopt;
  ++frames_;
  return state_frame().dump();
}

nlohmann::json BridgeSession::state_frame() const {
  nlohmann::json obs = nlohmann::json::array();
  for (const sim::Obstacle& ob : loop_->scenario().obstacles)
    obs.push_back({{"center", vec_json(ob.center)}, {"radius", ob.radius}, {"height", sim::to_string(ob.height)}});
  const sim::PhrcMetrics m = acc_.summary();
  return {{"type", "state"},
          {"t", last_.t},
          {"x", vec_json(last_.x)},
          {"v", vec_json(last_.v)},
          {"fh", vec_json(last_.f_h)},
          {"fr", vec_json(last_.f_r)},
          {"kappa", last_.kappa},
          {"yref", vec_json(last_.y_ref)},
          {"pred_h", decimate(loop_->prediction_human(), bc_.pred_stride)},
          {"pred_r", decimate(loop_->prediction_robot(), bc_.pred_stride)},
          {"obstacles", obs},
          {"metrics", {{"theta", opt(m.theta_deg)}, {"iasst", opt(m.i_asst)}, {"mu", opt(m.mu)}, {"work", m.work_j}}}};
}

}  // namespace phrc::bridge
