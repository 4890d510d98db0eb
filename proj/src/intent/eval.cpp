#include "phrc/intent/eval.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/numfmt.hpp"

#include <cstdio>
#include <ostream>
#include <random>

namespace phrc::intent {

void EvalConfig::validate() const {
  if (samples == 0) throw ConfigError("best-of-N needs at least one sample");
  if (every == 0) throw ConfigError("window decimation must be at least 1");
}

EvalResult evaluate(const BranchModel& model, const std::vector<Trajectory>& trajs, const EvalConfig& cfg) {
  cfg.validate();
  EvalResult res;
  res.samples = cfg.samples;
  const auto l_obs = static_cast<std::size_t>(model.l_obs());
  const auto l_fut = static_cast<std::size_t>(model.l_fut());
  std::size_t counter = 0;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const Trajectory& tr = trajs[k];
    if (tr.branch() != model.branch()) throw ValidationError("trajectory " + std::to_string(k) + " is not a " +
                                                             to_string(model.branch()) + " trajectory");
    const auto windows = slice_windows(tr, l_obs, l_fut);
    for (std::size_t i = 0; i < windows.size(); ++i, ++counter) {
      if (counter % cfg.every != 0) continue;
      const WindowPair& w = windows[i];
      std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)};
      std::uint64_t draw_seed = 0;
      {
        std::uint32_t parts[2];
        seq.generate(parts, parts + 2);
        draw_seed = (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
      }
      WindowEval e;
      e.traj = k;
      e.start = i;
      const Prediction ml = model.sample_most_likely(w.past);
      e.ml_ade = ade_m(ml, w.future);
      e.ml_fde = fde_m(ml, w.future);
      const BestOfN bo = model.sample_best_of_n(w.past, cfg.samples, w.future, draw_seed);
      e.bo_ade = bo.ade_m;
      e.bo_fde = fde_m(bo.best, w.future);
      const Prediction cv = constant_velocity(w.past, model.l_fut(), tr.dt());
      e.cv_ade = ade_m(cv, w.future);
      e.cv_fde = fde_m(cv, w.future);
      res.windows.push_back(e);
    }
  }
  if (res.windows.empty()) throw ValidationError("no evaluation windows");
  return res;
}

EvalSummary EvalResult::summary() const {
  EvalSummary s;
  s.windows = windows.size();
  std::size_t le = 0;
  for (const WindowEval& e : windows) {
    s.ml_ade_mm += e.ml_ade;
    s.ml_fde_mm += e.ml_fde;
    s.bo_ade_mm += e.bo_ade;
    s.bo_fde_mm += e.bo_fde;
    s.cv_ade_mm += e.cv_ade;
    s.cv_fde_mm += e.cv_fde;
    le += e.bo_ade <= e.ml_ade;
  }
  if (s.windows == 0) return s;
  const double scale = 1e3 / static_cast<double>(s.windows);
  for (double* v : {&s.ml_ade_mm, &s.ml_fde_mm, &s.bo_ade_mm, &s.bo_fde_mm, &s.cv_ade_mm, &s.cv_fde_mm}) *v *= scale;
  s.bo_le_ml = static_cast<double>(le) / static_cast<double>(s.windows);
  return s;
}

void EvalResult::write_table(std::ostream& out, const std::string& name) const {
  const EvalSummary s = summary();
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s | %9s %9s | %9s %9s\n", "Method", "BoN ADE", "BoN FDE", "ML ADE", "ML FDE");
  out << "best-of-" << samples << " and most likely, mm, " << s.windows << " windows\n" << buf;
  std::snprintf(buf, sizeof buf, "%-12s | %9.2f %9.2f | %9.2f %9.2f\n", name.c_str(), s.bo_ade_mm, s.bo_fde_mm,
                s.ml_ade_mm, s.ml_fde_mm);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-12s | %9s %9s | %9.2f %9.2f\n", "const-vel", "-", "-", s.cv_ade_mm, s.cv_fde_mm);
  out << buf;
  std::snprintf(buf, sizeof buf, "best-of-%zu ADE <= most-likely ADE on %.2f%% of windows\n", samples,
                100.0 * s.bo_le_ml);
  out << buf;
}

void EvalResult::write_csv(std::ostream& out) const {
  const EvalSummary s = summary();
  const std::string n = std::to_string(s.windows);
  out << "method,ade_mm,fde_mm,windows\n";
  out << "best_of_" << samples << ',' << format_double(s.bo_ade_mm) << ',' << format_double(s.bo_fde_mm) << ',' << n
      << '\n';
  out << "most_likely," << format_double(s.ml_ade_mm) << ',' << format_double(s.ml_fde_mm) << ',' << n << '\n';
  out << "const_vel," << format_double(s.cv_ade_mm) << ',' << format_double(s.cv_fde_mm) << ',' << n << '\n';
  out << "bo_le_ml," << format_double(s.bo_le_ml) << ",," << n << '\n';
}

}  // namespace phrc::intent
