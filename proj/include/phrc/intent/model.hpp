#pragma once

#include "phrc/core/types.hpp"
#include "phrc/nn/graph.hpp"
#include "phrc/nn/layers.hpp"
#include "phrc/nn/ops.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace phrc::intent {

using nn::Graph;
using nn::Index;
using nn::Mat;
using nn::NetConfig;
using nn::Var;
using VecX = Eigen::VectorXd;

/// Output channels per future step: position and velocity.
inline constexpr Index kOutDim = 6;
/// log-variance clamp for latent Gaussians.
inline constexpr double kLogVarBound = 10.0;
/// Floor on every reported mixture variance.
inline constexpr double kVarianceFloor = 1e-8;

struct LossWeights {
  double kl_weight = 1.0;
  double recon_weight = 1.0;

  void validate() const;
};

struct GaussianParams {
  VecX mean;
  VecX log_var;
};

struct GmmStep {
  VecX weights;                 // n_mix, on the simplex
  std::vector<Vec6> means;      // absolute pos + vel
  std::vector<Vec6> variances;  // diagonal, >= kVarianceFloor
};
using GmmSequence = std::vector<GmmStep>;

/// L_fut predicted [pos, vel] states in absolute coordinates.
using Prediction = std::vector<Vec6>;

/// Per-channel affine normalisation. Inputs are expressed relative to the
/// anchor (last past position) before scaling; so are output positions.
struct Normalizer {
  VecX in_mean, in_std;
  VecX out_mean, out_std;

  bool fitted() const { return in_std.size() > 0; }
  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
};

struct BestOfN {
  Prediction best;
  double ade_m = 0.0;
  std::size_t index = 0;
  std::vector<Prediction> candidates;
};

/// One branch of the dual-branch conditional VAE.
class BranchModel {
 public:
  BranchModel(Branch branch, NetConfig cfg, Index l_obs = 8, Index l_fut = 12, std::uint64_t seed = 0);

  Branch branch() const noexcept { return branch_; }
  Index input_dim() const noexcept { return branch_ == Branch::Human ? 9 : 6; }
  const NetConfig& net() const noexcept { return cfg_; }
  Index l_obs() const noexcept { return l_obs_; }
  Index l_fut() const noexcept { return l_fut_; }

  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  Normalizer& normalizer() noexcept { return norm_; }
  const Normalizer& normalizer() const noexcept { return norm_; }

  /// Fits the normaliser on the given windows.
  void fit_normalizer(std::span<const WindowPair> windows);

  GaussianParams encode_past(std::span<const StateSample> past) const;
  GaussianParams encode_future(std::span<const StateSample> past,
                               std::span<const StateSample> future) const;
  GmmSequence decode(std::span<const StateSample> past, const VecX& z) const;

  /// Latent mean of the prior, then the highest-weight component mean per
  /// step (ties go to the lowest index).
  Prediction sample_most_likely(std::span<const StateSample> past) const;

  /// n latent draws from the prior, each decoded like sample_most_likely;
  /// returns the candidate with lowest ADE against `gt`. When
  /// `include_most_likely` is set the latent mean is prepended as candidate 0.
  BestOfN sample_best_of_n(std::span<const StateSample> past, std::size_t n,
                           std::span<const StateSample> gt, std::uint64_t seed,
                           bool include_most_likely = false) const;

  // ---- batched graph interface (training and tests) ----

  struct Batch {
    Mat past;    // (B*l_obs) x input_dim, normalised
    Mat future;  // (B*l_fut) x 6, normalised
    Index size = 0;
  };
  Batch make_batch(std::span<const WindowPair> windows) const;
  /// Normalised past features only; `future` is left empty.
  Mat encode_inputs(std::span<const StateSample> past) const;

  struct Encoded {
    Var mean, log_var;
    Var memory;  // per-token features, (B*len) x d_model
  };
  struct Decoded {
    Var logits, means, log_vars;  // (B*l_fut) x {K, 6K, 6K}
  };

  Encoded past_encoder(Graph& g, Var past, Index batch, const nn::ForwardContext& ctx) const;
  Encoded future_encoder(Graph& g, Var future, Var past_memory, Index batch,
                         const nn::ForwardContext& ctx) const;
  /// Causal temporal convolution over the normalised past.
  Var temporal_conv(Graph& g, Var past, Index batch) const;
  /// Decoder input tokens from z (B x d_z) and the convolution features.
  Var decoder_tokens(Graph& g, Var z, Var conv, Index batch) const;
  /// Causally masked blocks plus the mixture head.
  Decoded decoder_head(Graph& g, Var tokens, Var conv, Index batch, const nn::ForwardContext& ctx) const;

  struct Elbo {
    Var loss, kl, recon;
  };
  /// Weighted negative ELBO averaged over the batch. `noise` (B x d_z) drives
  /// the reparameterised posterior draw.
  Elbo elbo(Graph& g, const Batch& batch, const LossWeights& w, const Mat& noise,
            const nn::ForwardContext& ctx) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static BranchModel load(std::istream& in);
  static BranchModel load(const std::filesystem::path& path);

 private:
  void check_past(std::span<const StateSample> past) const;
  Mat feature_rows(std::span<const StateSample> past) const;
  Mat target_rows(std::span<const StateSample> future, const Vec3& anchor) const;
  GmmSequence to_sequence(const Graph& g, const Decoded& d, Index b, const Vec3& anchor) const;
  Prediction top_component(const GmmSequence& seq) const;
  std::vector<Prediction> decode_many(std::span<const StateSample> past, const Mat& z) const;

  Branch branch_;
  NetConfig cfg_;
  Index l_obs_, l_fut_;
  std::uint64_t seed_;
  nn::ParamStore params_;
  Normalizer norm_;

  struct Head {
    nn::Linear mlp_in, mlp_out;
  };
  // Past encoder.
  nn::Linear past_embed_;
  std::vector<nn::EncoderBlock> past_blocks_;
  nn::LayerNorm past_norm_;
  Head past_head_;
  // Future encoder.
  nn::Linear fut_embed_;
  std::vector<nn::CrossBlock> fut_blocks_;
  nn::LayerNorm fut_norm_;
  Head fut_head_;
  // Decoder.
  nn::Linear conv_;
  nn::LayerNorm conv_norm_;
  nn::Linear dec_embed_;
  std::vector<nn::CrossBlock> dec_blocks_;
  nn::LayerNorm dec_norm_;
  nn::Linear gmm_out_;
};

/// Mean L2 position error (metres) over the steps of two equal-length sequences.
double ade_m(const Prediction& pred, std::span<const StateSample> gt);
double fde_m(const Prediction& pred, std::span<const StateSample> gt);

/// Position + velocity extrapolated at constant velocity from the last past sample.
Prediction constant_velocity(std::span<const StateSample> past, Index l_fut, double dt);

/// Most-likely prediction of both branches. The two windows must end at the
/// same time to within half a sample period.
std::pair<Prediction, Prediction> predict_dual(const BranchModel& robot, const BranchModel& human,
                                               std::span<const StateSample> x_robot,
                                               std::span<const StateSample> x_human);

}  // namespace phrc::intent
