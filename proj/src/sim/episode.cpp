#include "phrc/sim/episode.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/numfmt.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

namespace phrc::sim {

namespace {

constexpr std::string_view kEpisodeTag = "#EPISODE ";

std::vector<Vec3> positions(const intent::Prediction& p) {
  std::vector<Vec3> out;
  out.reserve(p.size());
  for (const Vec6& y : p) out.push_back(y.head<3>());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- predictors

Predictor model_predictor(const intent::BranchModel& model) {
  return [&model](std::span<const StateSample> past) { return model.sample_most_likely(past); };
}

Predictor constant_velocity_predictor(std::size_t l_fut, double dt) {
  return [l_fut, dt](std::span<const StateSample> past) {
    return intent::constant_velocity(past, static_cast<intent::Index>(l_fut), dt);
  };
}

Predictors model_predictors(const intent::BranchModel& robot, const intent::BranchModel& human) {
  if (robot.branch() != Branch::Robot || human.branch() != Branch::Human)
    throw ConfigError("closed loop expects a robot and a human branch model");
  if (robot.l_obs() != human.l_obs()) throw ConfigError("branch models disagree on the observation length");
  Predictors p;
  p.robot = model_predictor(robot);
  p.human = model_predictor(human);
  p.l_obs = static_cast<std::size_t>(robot.l_obs());
  return p;
}

// ---------------------------------------------------------------- closed loop

ClosedLoop::ClosedLoop(Scenario sc, control::ControllerConfig cfg, Predictors predictors, std::uint64_t seed)
    : sc_(std::move(sc)),
      cfg_(std::move(cfg)),
      pred_(std::move(predictors)),
      alloc_(cfg_),
      human_(sc_, seed),
      dt_(1.0 / cfg_.control_hz) {
  sc_.validate();
  if (!pred_.robot || !pred_.human) throw ConfigError("closed loop needs both branch predictors");
  if (pred_.l_obs < 2) throw ConfigError("observation length must be at least 2");
  const double ratio = cfg_.control_hz / cfg_.predict_hz;
  refresh_every_ = static_cast<std::size_t>(std::lround(ratio));
  if (refresh_every_ < 1 || std::abs(ratio - static_cast<double>(refresh_every_)) > 1e-9)
    throw ConfigError("control_hz must be an integer multiple of predict_hz");
  state_.x = sc_.start;
  state_.v = Vec3::Zero();
}

std::vector<StateSample> ClosedLoop::robot_window() const {
  std::vector<StateSample> w(pred_.l_obs);
  const double now = time();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = now - static_cast<double>(w.size() - 1 - i) * dt_;
    w[i] = sc_.plan(std::max(t, 0.0));
    w[i].t = t;
  }
  return w;
}

std::vector<StateSample> ClosedLoop::human_window() const {
  std::vector<StateSample> w(pred_.l_obs);
  const std::size_t n = history_.size();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::size_t back = w.size() - 1 - i;
    w[i] = back < n ? history_[n - 1 - back] : history_.front();
    w[i].t = time() - static_cast<double>(back) * dt_;
  }
  return w;
}

void ClosedLoop::refresh_predictions() {
  const auto wr = robot_window();
  const auto wh = human_window();
  pred_r_ = pred_.robot(wr);
  pred_h_ = pred_.human(wh);
  if (pred_r_.empty() || pred_h_.empty()) throw NumericalError("predictor returned an empty sequence");
  pred_t_ = time();
}

Vec6 ClosedLoop::lookahead(const intent::Prediction& p, double age) const {
  const auto j = static_cast<std::size_t>(std::lround(age / dt_));
  return p[std::min(j, p.size() - 1)];
}

const EpisodeTick& ClosedLoop::step(const std::optional<Vec3>& external_force) {
  const double t = time();
  const Vec3 f_h = external_force ? clamp_norm(*external_force, sc_.f_max) : human_.force(state_);

  StateSample now;
  now.t = t;
  now.pos = state_.x;
  now.vel = state_.v;
  now.force = f_h;
  history_.push_back(now);
  if (history_.size() > 4 * pred_.l_obs) history_.erase(history_.begin());

  if (tick_ % refresh_every_ == 0) refresh_predictions();
  const double age = t - pred_t_;
  const Vec6 y = (Vec6() << state_.x, state_.v).finished();
  const control::AllocationState& a =
      alloc_.tick(y, f_h, lookahead(pred_h_, age), lookahead(pred_r_, age), age);
  if (a.stale)
    throw ValidationError("stale prediction at tick " + std::to_string(tick_) + " (age " + format_double(age) + " s)");

  last_.t = t;
  last_.x = state_.x;
  last_.v = state_.v;
  last_.f_h = f_h;
  last_.f_r = a.f_r;
  last_.kappa = a.kappa;
  last_.y_ref = a.y_ref;

  const PlantState next = plant_step(cfg_.impedance, state_, f_h, a.f_r, a.y_ref, dt_);
  if (!next.x.allFinite() || !next.v.allFinite())
    throw NumericalError("non-finite plant state at tick " + std::to_string(tick_));
  state_ = next;
  ++tick_;
  return last_;
}

EpisodeLog run_episode(const Scenario& sc, const control::ControllerConfig& cfg, const Predictors& predictors,
                       std::uint64_t seed) {
  EpisodeLog log;
  log.scenario = sc;
  log.controller = cfg;
  log.seed = seed;
  ClosedLoop loop(sc, cfg, predictors, seed);
  std::size_t refreshes = 0;
  double last_pred_t = -1.0;
  while (!loop.finished()) {
    try {
      log.ticks.push_back(loop.step());
    } catch (const std::exception& e) {
      log.failed = true;
      log.failed_tick = loop.tick_index();
      log.failure = e.what();
      break;
    }
    if (loop.prediction_time() != last_pred_t) {
      last_pred_t = loop.prediction_time();
      if (refreshes++ % 3 == 0)
        log.predictions.push_back(
            {last_pred_t, positions(loop.prediction_human()), positions(loop.prediction_robot())});
    }
  }
  log.compute_summary();
  return log;
}

// ---------------------------------------------------------------- episode log

ForceTrace EpisodeLog::trace(std::vector<Vec3>& pos, std::vector<Vec3>& fh, std::vector<Vec3>& fr) const {
  pos.clear();
  fh.clear();
  fr.clear();
  for (const EpisodeTick& k : ticks) {
    pos.push_back(k.x);
    fh.push_back(k.f_h);
    fr.push_back(k.f_r);
  }
  return {pos, fh, fr};
}

void EpisodeLog::compute_summary() {
  std::vector<Vec3> pos, fh, fr;
  guided = metric_phrc(trace(pos, fh, fr), true);
  min_clearance = std::numeric_limits<double>::infinity();
  for (const EpisodeTick& k : ticks)
    for (const Obstacle& ob : scenario.obstacles)
      min_clearance = std::min(min_clearance, (k.x - ob.center).norm() - ob.radius);
}

nlohmann::json EpisodeLog::header() const {
  nlohmann::json j;
  j["scenario"] = scenario.to_json();
  j["controller"] = controller.to_json();
  j["seed"] = seed;
  j["ticks"] = ticks.size();
  j["metrics"] = guided.to_json();
  j["min_clearance"] = std::isfinite(min_clearance) ? nlohmann::json(min_clearance) : nlohmann::json(nullptr);
  j["failed"] = failed;
  j["failed_tick"] = failed_tick ? nlohmann::json(*failed_tick) : nlohmann::json(nullptr);
  j["failure"] = failure;
  return j;
}

void EpisodeLog::write(std::ostream& out) const {
  out << kEpisodeTag << header().dump() << '\n' << kEpisodeColumns << '\n';
  for (const EpisodeTick& k : ticks) {
    out << format_double(k.t);
    for (const Vec3* v : {&k.x, &k.v, &k.f_h, &k.f_r})
      for (int i = 0; i < 3; ++i) out << ',' << format_double((*v)(i));
    out << ',' << format_double(k.kappa) << '\n';
  }
}

void EpisodeLog::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write episode log " + path.string());
  write(f);
  if (!f) throw IoError("write failed for " + path.string());
}

EpisodeLog EpisodeLog::read(std::istream& in) {
  EpisodeLog log;
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line.rfind(kEpisodeTag, 0) != 0) throw ParseError(1, "missing #EPISODE header");
  try {
    const auto j = nlohmann::json::parse(line.substr(kEpisodeTag.size()));
    log.scenario = Scenario::from_json(j.at("scenario"));
    log.controller = control::ControllerConfig::from_json(j.at("controller"));
    log.seed = j.at("seed").get<std::uint64_t>();
    log.guided = PhrcMetrics::from_json(j.at("metrics"));
    log.min_clearance = j.at("min_clearance").is_null() ? std::numeric_limits<double>::infinity()
                                                         : j.at("min_clearance").get<double>();
    log.failed = j.at("failed").get<bool>();
    if (!j.at("failed_tick").is_null()) log.failed_tick = j.at("failed_tick").get<std::size_t>();
    log.failure = j.at("failure").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("bad episode header: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(1, std::string("bad episode header: ") + e.what());
  }
  ++lineno;
  if (!std::getline(in, line) || line != kEpisodeColumns) throw ParseError(lineno, "expected episode column header");
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double vals[14];
    std::size_t col = 0, start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                                     : comma - start);
      if (col >= 14) throw ParseError(lineno, "too many columns");
      const auto v = parse_double(cell);
      if (!v) throw ParseError(lineno, "non-numeric cell '" + std::string(cell) + "'");
      vals[col++] = *v;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (col != 14) throw ParseError(lineno, "expected 14 columns");
    EpisodeTick k;
    k.t = vals[0];
    k.x = Vec3(vals[1], vals[2], vals[3]);
    k.v = Vec3(vals[4], vals[5], vals[6]);
    k.f_h = Vec3(vals[7], vals[8], vals[9]);
    k.f_r = Vec3(vals[10], vals[11], vals[12]);
    k.kappa = vals[13];
    log.ticks.push_back(k);
  }
  return log;
}

EpisodeLog EpisodeLog::read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open episode log " + path.string());
  return read(f);
}

}  // namespace phrc::sim
