#pragma once

#include "phrc/core/error.hpp"
#include "phrc/nn/graph.hpp"

#include <Eigen/Core>

#include <random>
#include <vector>

namespace phrc::nn {

using Rng = std::mt19937_64;

/// Attention mask over (query, key) pairs; true = blocked.
using AttnMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Strictly upper-triangular block: query t may not see keys after t.
AttnMask causal_mask(Index len);

/// Raised by gmm_nll when a row's log-likelihood is not finite.
class NonFiniteLikelihood : public NumericalError {
 public:
  NonFiniteLikelihood(Index row, const std::string& what) : NumericalError(what), row_(row) {}
  Index row() const noexcept { return row_; }

 private:
  Index row_;
};

Var matmul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
/// x + 1·row, broadcasting a 1xC row over every row of x.
Var add_row(Graph& g, Var x, Var row);
/// x·W + b with W stored (in x out) and b (1 x out).
Var linear(Graph& g, Var x, Var w, Var b);
Var scale(Graph& g, Var x, double s);
Var mul(Graph& g, Var a, Var b);
Var exp(Graph& g, Var x);
/// tanh-approximated GELU.
Var gelu(Graph& g, Var x);
Var clamp(Graph& g, Var x, double lo, double hi);
/// Row-wise normalisation with learned gain and bias (both 1 x C).
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);

Var concat_cols(Graph& g, const std::vector<Var>& parts);
Var slice_cols(Graph& g, Var x, Index start, Index count);
Var select_rows(Graph& g, Var x, const std::vector<Index>& rows);
/// Each row of x repeated `times` times consecutively.
Var repeat_rows(Graph& g, Var x, Index times);
/// Within consecutive segments of `segment` rows, row t takes row t-shift
/// (zero for t < shift). Builds causal temporal convolutions.
Var shift_rows(Graph& g, Var x, Index shift, Index segment);
/// Inverted dropout; identity when p == 0.
Var dropout(Graph& g, Var x, double p, Rng& rng);

Var sum(Graph& g, Var x);
/// sum(x ∘ weights), with constant weights.
Var weighted_sum(Graph& g, Var x, const Mat& weights);

struct AttentionShape {
  Index batch = 1;
  Index len_q = 1;
  Index len_k = 1;
  Index heads = 1;
};

/// Scaled dot-product attention over stacked batches.
///
/// q is (batch*len_q) x (heads*d_k), k is (batch*len_k) x (heads*d_k) and v is
/// (batch*len_k) x (heads*d_v). Each (batch, head) pair computes
/// softmax(Q K^T / sqrt(d_k)) V with blocked entries excluded; heads are
/// concatenated column-wise. A row with every key blocked throws ConfigError.
Var attention(Graph& g, Var q, Var k, Var v, const AttentionShape& shape,
              const AttnMask* mask = nullptr);

/// Attention weight matrix for a single head and batch (value only).
Mat attention_weights(const Mat& q, const Mat& k, const AttnMask* mask = nullptr);

/// Sum over rows of the closed-form KL(q || p) between diagonal Gaussians.
Var gaussian_kl(Graph& g, Var mean_q, Var logvar_q, Var mean_p, Var logvar_p);

/// Sum over rows of -log sum_k softmax(logits)_k N(target | mean_k, diag exp(logvar_k)).
/// means/logvars hold component k in columns [k*D, (k+1)*D).
Var gmm_nll(Graph& g, Var logits, Var means, Var logvars, const Mat& target, Index n_mix);

}  // namespace phrc::nn
