#include "phrc/intent/train.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/numfmt.hpp"
#include "phrc/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace phrc::intent {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  weights.validate();
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,loss,kl,recon\n";
  for (const auto& e : epochs)
    out << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.kl) << ','
        << format_double(e.recon) << '\n';
}

TrainReport train(BranchModel& model, std::span<const WindowPair> windows, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (windows.empty()) throw ValidationError("training corpus yields no windows");
  if (cfg.fit_normalizer) model.fit_normalizer(windows);

  nn::Rng rng(cfg.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  nn::Adam opt(model.params(), {cfg.lr});
  const nn::ForwardContext ctx{model.net().dropout, &rng};

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<WindowPair> chunk;

  TrainReport report;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st{epoch, 0.0, 0.0, 0.0};
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      chunk.clear();
      for (std::size_t i = start; i < end; ++i) chunk.push_back(windows[order[i]]);
      const auto batch = model.make_batch(chunk);
      Mat noise(batch.size, model.net().d_z);
      for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = nd(rng);

      model.params().zero_grad();
      nn::Graph g(model.params());
      const auto terms = model.elbo(g, batch, cfg.weights, noise, ctx);
      const double loss = g.value(terms.loss)(0, 0);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches));
      g.backward(terms.loss);
      opt.step(model.params());

      st.loss += loss;
      st.kl += g.value(terms.kl)(0, 0);
      st.recon += g.value(terms.recon)(0, 0);
      ++batches;
    }
    st.loss /= static_cast<double>(batches);
    st.kl /= static_cast<double>(batches);
    st.recon /= static_cast<double>(batches);
    report.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  report.skipped_steps = opt.skipped();
  return report;
}

std::vector<WindowPair> collect_windows(const std::vector<Trajectory>& trajs, Branch branch, Index l_obs,
                                        Index l_fut, std::size_t stride) {
  std::vector<WindowPair> out;
  for (const auto& t : trajs) {
    if (t.branch() != branch) continue;
    auto w = slice_windows(t, static_cast<std::size_t>(l_obs), static_cast<std::size_t>(l_fut), stride);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

}  // namespace phrc::intent
