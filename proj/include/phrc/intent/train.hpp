#pragma once

#include "phrc/intent/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace phrc::intent {

struct TrainConfig {
  int epochs = 20;
  Index batch = 32;
  double lr = 1e-3;
  LossWeights weights;
  std::uint64_t seed = 0;
  /// Refit normalisation statistics on the training windows first.
  bool fit_normalizer = true;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double kl = 0.0;
  double recon = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  long skipped_steps = 0;

  /// CSV with header `epoch,loss,kl,recon`.
  void write_csv(std::ostream& out) const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Reparameterised minibatch training with Adam. Windows are reshuffled each
/// epoch from `cfg.seed`; report values are averages over batches.
TrainReport train(BranchModel& model, std::span<const WindowPair> windows, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Windows of every trajectory whose branch matches the model.
std::vector<WindowPair> collect_windows(const std::vector<Trajectory>& trajs, Branch branch, Index l_obs,
                                        Index l_fut, std::size_t stride);

}  // namespace phrc::intent
