// Command-line front end: datagen | train | eval | simulate | serve | report.
// Exit codes: 0 success, 2 invalid input or configuration, 1 runtime failure.

#include "phrc/bridge/server.hpp"
#include "phrc/core/corpus_io.hpp"
#include "phrc/core/error.hpp"
#include "phrc/core/numfmt.hpp"
#include "phrc/datagen/generators.hpp"
#include "phrc/intent/eval.hpp"
#include "phrc/intent/train.hpp"
#include "phrc/sim/episode.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <thread>

namespace fs = std::filesystem;
using namespace phrc;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInvalid = 2;

// ---------------------------------------------------------------- config file

/// Top-level sections: multimodal, phrc, net, train, controller, bridge.
json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"multimodal", "phrc", "net", "train", "controller", "bridge"};
  for (const auto& [key, val] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config section '" + key + "'");
  return j;
}

json section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg.at(key) : json::object(); }

struct TrainRecipe {
  intent::TrainConfig train;
  nn::NetConfig net;
  intent::Index l_obs = 8;
  intent::Index l_fut = 12;
  std::size_t stride = 1;
};

TrainRecipe train_recipe(const json& cfg) {
  TrainRecipe r;
  r.net = nn::NetConfig::from_json(section(cfg, "net"));
  const json t = section(cfg, "train");
  static const std::set<std::string> known{"epochs", "batch", "lr", "kl_weight", "recon_weight", "l_obs", "l_fut",
                                           "stride"};
  try {
    for (const auto& [key, val] : t.items())
      if (!known.count(key)) throw ConfigError("unknown train key '" + key + "'");
    r.train.epochs = t.value("epochs", r.train.epochs);
    r.train.batch = t.value("batch", r.train.batch);
    r.train.lr = t.value("lr", r.train.lr);
    r.train.weights.kl_weight = t.value("kl_weight", r.train.weights.kl_weight);
    r.train.weights.recon_weight = t.value("recon_weight", r.train.weights.recon_weight);
    r.l_obs = t.value("l_obs", r.l_obs);
    r.l_fut = t.value("l_fut", r.l_fut);
    r.stride = t.value("stride", r.stride);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (r.stride == 0) throw ConfigError("stride must be at least 1");
  return r;
}

control::ControllerConfig controller_config(const json& cfg) {
  return cfg.contains("controller") ? control::ControllerConfig::from_json(cfg.at("controller"))
                                    : control::ControllerConfig{};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : "nan"; }

// ---------------------------------------------------------------- predictors

struct PredictorArgs {
  std::string kind = "model";
  std::string robot, human;
};

struct LoadedPredictors {
  std::unique_ptr<intent::BranchModel> robot, human;
  sim::Predictors predictors;
};

LoadedPredictors load_predictors(const PredictorArgs& a) {
  LoadedPredictors out;
  if (a.kind == "cv") {
    out.predictors.robot = sim::constant_velocity_predictor(12, 0.01);
    out.predictors.human = sim::constant_velocity_predictor(12, 0.01);
    return out;
  }
  if (a.robot.empty() || a.human.empty())
    throw ConfigError("--robot and --human checkpoints are required with --predictor model");
  out.robot = std::make_unique<intent::BranchModel>(intent::BranchModel::load(fs::path(a.robot)));
  out.human = std::make_unique<intent::BranchModel>(intent::BranchModel::load(fs::path(a.human)));
  out.predictors = sim::model_predictors(*out.robot, *out.human);
  return out;
}

void add_predictor_flags(CLI::App* cmd, PredictorArgs& a) {
  cmd->add_option("--predictor", a.kind, "model (trained checkpoints) or cv (constant velocity)")
      ->check(CLI::IsMember({"model", "cv"}));
  cmd->add_option("--robot", a.robot, "Robot-branch checkpoint")->check(CLI::ExistingFile);
  cmd->add_option("--human", a.human, "Human-branch checkpoint")->check(CLI::ExistingFile);
}

/// Builtin names (free, standard, standard:<n>) or a scenario JSON file.
sim::Scenario resolve_scenario(const std::string& name) {
  if (name == "free" || name == "standard" || name.rfind("standard:", 0) == 0) return sim::scenario_by_name(name);
  return sim::Scenario::load(fs::path(name));
}

// ---------------------------------------------------------------- datagen

struct DatagenArgs {
  std::string kind = "multimodal";
  std::size_t count = 2000;
  std::size_t n_free = 40, n_avoid = 60;
  std::optional<double> dt;
  double train_fraction = 0.9;
};

int run_datagen(const DatagenArgs& a, const json& cfg, std::uint64_t seed, const fs::path& out) {
  ensure_dir(out);
  if (a.kind == "multimodal") {
    const auto params = datagen::MultimodalParams::from_json(section(cfg, "multimodal"));
    const double dt = a.dt.value_or(0.05);
    if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) throw ConfigError("--train-fraction must lie in (0, 1)");
    const auto trajs = datagen::gen_multimodal(a.count, dt, seed, params);
    const auto n_train = static_cast<std::size_t>(std::llround(a.train_fraction * static_cast<double>(a.count)));
    auto write = [&](const char* name, std::size_t lo, std::size_t hi) {
      CorpusManifest m;
      m.dt = dt;
      m.branch = Branch::Robot;
      m.seed = seed;
      m.generator = {{"kind", "multimodal"}, {"params", params.to_json()}, {"split", name}, {"first", lo},
                     {"total", a.count}};
      const std::vector<Trajectory> part(trajs.begin() + static_cast<std::ptrdiff_t>(lo),
                                         trajs.begin() + static_cast<std::ptrdiff_t>(hi));
      const fs::path p = out / (std::string("multimodal_") + name + ".csv");
      m.count = part.size();
      write_corpus(p, m, part);
      std::cout << p.string() << ": " << part.size() << " trajectories\n";
    };
    write("train", 0, n_train);
    write("test", n_train, a.count);
    return 0;
  }
  const auto params = datagen::PhrcParams::from_json(section(cfg, "phrc"));
  const double dt = a.dt.value_or(0.01);
  const auto trajs = datagen::gen_phrc(a.n_free, a.n_avoid, dt, seed, params);
  auto write = [&](const char* name, Branch b, std::size_t lo, std::size_t hi) {
    CorpusManifest m;
    m.dt = dt;
    m.branch = b;
    m.seed = seed;
    m.generator = {{"kind", "phrc"}, {"params", params.to_json()}, {"n_free", a.n_free}, {"n_avoid", a.n_avoid}};
    const std::vector<Trajectory> part(trajs.begin() + static_cast<std::ptrdiff_t>(lo),
                                       trajs.begin() + static_cast<std::ptrdiff_t>(hi));
    const fs::path p = out / (std::string("phrc_") + name + ".csv");
    m.count = part.size();
    write_corpus(p, m, part);
    std::cout << p.string() << ": " << part.size() << " trajectories\n";
  };
  write("free", Branch::Robot, 0, a.n_free);
  write("avoid", Branch::Human, a.n_free, a.n_free + a.n_avoid);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string branch;
  std::vector<std::string> corpora;
  std::optional<int> epochs;
  std::optional<std::size_t> stride;
};

int run_train(const TrainArgs& a, const json& cfg, std::uint64_t seed, const fs::path& out) {
  TrainRecipe r = train_recipe(cfg);
  if (a.epochs) r.train.epochs = *a.epochs;
  if (a.stride) r.stride = *a.stride;
  if (r.stride == 0) throw ConfigError("stride must be at least 1");
  r.train.seed = seed;
  r.train.validate();
  const Branch branch = parse_branch(a.branch);
  std::vector<Trajectory> trajs;
  for (const auto& c : a.corpora) {
    Corpus corpus = read_corpus(fs::path(c));
    if (corpus.manifest.branch != branch)
      throw ValidationError("corpus " + c + " holds " + to_string(corpus.manifest.branch) + " trajectories");
    trajs.insert(trajs.end(), corpus.trajectories.begin(), corpus.trajectories.end());
  }
  const auto windows = intent::collect_windows(trajs, branch, r.l_obs, r.l_fut, r.stride);
  if (windows.empty()) throw ValidationError("no training windows in the corpus");
  ensure_dir(out);
  intent::BranchModel model(branch, r.net, r.l_obs, r.l_fut, seed);
  const auto report = intent::train(model, windows, r.train, [](const intent::EpochStats& e) {
    std::cout << "epoch " << e.epoch << " loss " << format_double(e.loss) << " kl " << format_double(e.kl)
              << " recon " << format_double(e.recon) << std::endl;
  });
  const fs::path ckpt = out / (to_string(branch) + ".ckpt");
  model.save(ckpt);
  std::ofstream rep(out / (to_string(branch) + "_train.csv"));
  if (!rep) throw IoError("cannot write training report");
  report.write_csv(rep);
  std::cout << "windows " << windows.size() << ", skipped steps " << report.skipped_steps << "\n"
            << "checkpoint " << ckpt.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string corpus;
  std::size_t samples = 20;
  std::size_t every = 1;
  std::string name = "model";
};

int run_eval(const EvalArgs& a, std::uint64_t seed, bool csv) {
  const auto model = intent::BranchModel::load(fs::path(a.model));
  const Corpus corpus = read_corpus(fs::path(a.corpus));
  intent::EvalConfig ec;
  ec.samples = a.samples;
  ec.every = a.every;
  ec.seed = seed;
  const auto res = intent::evaluate(model, corpus.trajectories, ec);
  if (csv)
    res.write_csv(std::cout);
  else
    res.write_table(std::cout, a.name);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scenario = "standard";
  std::size_t episodes = 1;
  std::optional<double> fixed_kappa;
  PredictorArgs pred;
};

int run_simulate(const SimulateArgs& a, const json& cfg, std::uint64_t seed, const fs::path& out, bool csv) {
  control::ControllerConfig ctrl = controller_config(cfg);
  if (a.fixed_kappa) ctrl.fixed_kappa = *a.fixed_kappa;
  ctrl.validate();
  // Resolve before loading models so a bad scenario fails fast.
  const bool per_seed = a.scenario == "standard";
  const sim::Scenario fixed = per_seed ? sim::Scenario{} : resolve_scenario(a.scenario);
  if (a.episodes == 0) throw ConfigError("--episodes must be at least 1");
  const LoadedPredictors lp = load_predictors(a.pred);
  ensure_dir(out);
  std::cout << (csv ? "seed,scenario,theta,iasst,mu,work,min_clearance,failed,log\n"
                    : "seed  scenario          theta    iasst     mu      work   clearance  failed\n");
  int failures = 0;
  for (std::size_t i = 0; i < a.episodes; ++i) {
    const std::uint64_t s = seed + i;
    const sim::Scenario sc = per_seed ? sim::Scenario::standard(s) : fixed;
    const sim::EpisodeLog log = sim::run_episode(sc, ctrl, lp.predictors, s);
    const fs::path p = out / ("episode_" + sanitize(sc.name) + "_" + std::to_string(s) + ".log");
    log.write(p);
    const auto& m = log.guided;
    if (csv) {
      std::cout << s << ',' << sc.name << ',' << fmt_opt(m.theta_deg) << ',' << fmt_opt(m.i_asst) << ','
                << fmt_opt(m.mu) << ',' << format_double(m.work_j) << ',' << format_double(log.min_clearance) << ','
                << (log.failed ? 1 : 0) << ',' << p.string() << '\n';
    } else {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%-5llu %-16s %7.2f %8.3f %6.3f %9.4f %10.4f  %s\n",
                    static_cast<unsigned long long>(s), sc.name.c_str(), m.theta_deg.value_or(NAN),
                    m.i_asst.value_or(NAN), m.mu.value_or(NAN), m.work_j, log.min_clearance,
                    log.failed ? log.failure.c_str() : "no");
      std::cout << buf;
    }
    failures += log.failed;
  }
  return failures > 0 ? kExitRuntime : 0;
}

// ---------------------------------------------------------------- serve

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

struct ServeArgs {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;
  std::string scenario = "standard";
  PredictorArgs pred;
};

int run_serve(const ServeArgs& a, const json& cfg) {
  bridge::ServeOptions o;
  o.address = a.address;
  o.port = a.port;
  o.controller = controller_config(cfg);
  o.scenario = resolve_scenario(a.scenario);
  const json b = section(cfg, "bridge");
  o.bridge.frame_hz = b.value("frame_hz", o.bridge.frame_hz);
  o.bridge.hold_s = b.value("hold_s", o.bridge.hold_s);
  o.bridge.liveness_s = b.value("liveness_s", o.bridge.liveness_s);
  o.bridge.pred_stride = b.value("pred_stride", o.bridge.pred_stride);
  const LoadedPredictors lp = load_predictors(a.pred);
  bridge::BridgeServer server(o, lp.predictors);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&server] {
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  std::cout << "listening on ws://" << a.address << ':' << server.port() << std::endl;
  server.run();
  g_interrupted = true;
  watcher.join();
  return 0;
}

// ---------------------------------------------------------------- report

int run_report(const std::vector<std::string>& logs, bool csv) {
  std::cout << (csv ? "log,theta,iasst,mu,work,min_clearance,included,match\n" : "");
  int mismatches = 0;
  for (const auto& path : logs) {
    const sim::EpisodeLog stored = sim::EpisodeLog::read(fs::path(path));
    sim::EpisodeLog redo = stored;
    redo.compute_summary();
    const auto& m = redo.guided;
    const auto& h = stored.guided;
    const bool match = m.theta_deg == h.theta_deg && m.i_asst == h.i_asst && m.mu == h.mu && m.work_j == h.work_j &&
                       m.included == h.included && redo.min_clearance == stored.min_clearance;
    mismatches += !match;
    if (csv) {
      std::cout << path << ',' << fmt_opt(m.theta_deg) << ',' << fmt_opt(m.i_asst) << ',' << fmt_opt(m.mu) << ','
                << format_double(m.work_j) << ',' << format_double(redo.min_clearance) << ',' << m.included << ','
                << (match ? "yes" : "no") << '\n';
    } else {
      std::cout << path << "\n  theta " << fmt_opt(m.theta_deg) << " deg, I_ASST " << fmt_opt(m.i_asst) << ", mu "
                << fmt_opt(m.mu) << ", W " << format_double(m.work_j) << " J, clearance "
                << format_double(redo.min_clearance) << " m, " << m.included << " guided ticks\n  header "
                << (match ? "matches" : "DIFFERS") << '\n';
    }
  }
  return mismatches > 0 ? kExitRuntime : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pHRC workbench: intent estimation, role allocation and closed-loop simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool csv = false;
  app.add_option("--config", config_path, "JSON config with sections multimodal, phrc, net, train, controller, bridge")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every random choice");
  app.add_option("--out", out, "Output directory");
  app.add_flag("--csv", csv, "Machine-readable CSV output");

  DatagenArgs dg;
  auto* c_dg = app.add_subcommand("datagen", "Generate the multimodal or pHRC corpus");
  c_dg->add_option("--kind", dg.kind, "multimodal or phrc")->check(CLI::IsMember({"multimodal", "phrc"}));
  c_dg->add_option("--count", dg.count, "Multimodal trajectory count");
  c_dg->add_option("--free", dg.n_free, "pHRC obstacle-free records");
  c_dg->add_option("--avoid", dg.n_avoid, "pHRC avoidance records");
  c_dg->add_option("--dt", dg.dt, "Sample period (default 0.05 multimodal, 0.01 phrc)");
  c_dg->add_option("--train-fraction", dg.train_fraction, "Multimodal train share");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train one branch model");
  c_tr->add_option("--branch", tr.branch, "robot or human")->required()->check(CLI::IsMember({"robot", "human"}));
  c_tr->add_option("--corpus", tr.corpora, "Corpus file(s)")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--epochs", tr.epochs, "Override train.epochs");
  c_tr->add_option("--stride", tr.stride, "Override train.stride (window step)");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "ADE/FDE of best-of-N and most-likely predictions");
  c_ev->add_option("--model", ev.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--corpus", ev.corpus, "Test corpus")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--samples", ev.samples, "Best-of-N draws");
  c_ev->add_option("--every", ev.every, "Keep every n-th window");
  c_ev->add_option("--name", ev.name, "Row label");

  SimulateArgs sm;
  auto* c_sm = app.add_subcommand("simulate", "Run closed-loop episodes and write episode logs");
  c_sm->add_option("--scenario", sm.scenario,
                   "standard (one standard scenario per seed), free, standard:<n> or a scenario JSON file");
  c_sm->add_option("--episodes", sm.episodes, "Episodes, seeds --seed .. --seed+n-1");
  c_sm->add_option("--fixed-kappa", sm.fixed_kappa, "Pin kappa (baseline runs)");
  add_predictor_flags(c_sm, sm.pred);

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Run the websocket sandbox bridge until interrupted");
  c_sv->add_option("--address", sv.address, "Bind address");
  c_sv->add_option("--port", sv.port, "Port (0 picks one)");
  c_sv->add_option("--scenario", sv.scenario, "Initial scenario name or JSON file");
  add_predictor_flags(c_sv, sv.pred);

  std::vector<std::string> logs;
  auto* c_rp = app.add_subcommand("report", "Recompute metrics from episode logs");
  c_rp->add_option("logs", logs, "Episode log files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    std::cerr << '\n' << app.help();
    return kExitInvalid;
  }

  try {
    const json cfg = load_config(config_path);
    if (*c_dg) return run_datagen(dg, cfg, seed, out);
    if (*c_tr) return run_train(tr, cfg, seed, out);
    if (*c_ev) return run_eval(ev, seed, csv);
    if (*c_sm) return run_simulate(sm, cfg, seed, out, csv);
    if (*c_sv) return run_serve(sv, cfg);
    if (*c_rp) return run_report(logs, csv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}
