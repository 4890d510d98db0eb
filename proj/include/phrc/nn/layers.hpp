#pragma once

#include "phrc/nn/graph.hpp"
#include "phrc/nn/ops.hpp"

#include <json.hpp>

#include <string>

namespace phrc::nn {

/// Network hyperparameters shared by both CVAE branches.
struct NetConfig {
  Index d_model = 64;
  Index n_heads = 4;
  Index n_layers = 2;
  Index d_ff = 128;
  Index d_z = 16;
  Index n_mix = 3;
  double dropout = 0.1;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
};

/// Sinusoidal encoding; row t is position `offset + t`. d_model must be even.
Mat positional_encoding(Index len, Index d_model, Index offset = 0);

/// Training-time behaviour. A default context disables dropout.
struct ForwardContext {
  double dropout = 0.0;
  Rng* rng = nullptr;

  Var drop(Graph& g, Var x) const { return (rng && dropout > 0.0) ? nn::dropout(g, x, dropout, *rng) : x; }
};

struct Linear {
  int w = -1;
  int b = -1;

  /// Weights uniform in ±1/sqrt(in); bias zero. `zero` leaves the weights at 0.
  static Linear create(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng,
                       bool zero = false);
  Var operator()(Graph& g, Var x) const { return linear(g, x, g.param(w), g.param(b)); }
};

struct LayerNorm {
  int gamma = -1;
  int beta = -1;

  static LayerNorm create(ParamStore& store, const std::string& name, Index dim);
  Var operator()(Graph& g, Var x) const { return layer_norm(g, x, g.param(gamma), g.param(beta)); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  Index heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, Index d_model,
                                   Index heads, Rng& rng);
  /// Projects, attends per head, concatenates and applies the output map.
  Var operator()(Graph& g, Var x_q, Var x_kv, Index batch, Index len_q, Index len_k,
                 const AttnMask* mask = nullptr) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward create(ParamStore& store, const std::string& name, Index d_model, Index d_ff,
                            Rng& rng);
  Var operator()(Graph& g, Var x) const { return down(g, gelu(g, up(g, x))); }
};

/// Pre-norm self-attention block: x + MHA(LN(x)), then + FF(LN(.)).
struct EncoderBlock {
  LayerNorm norm_attn, norm_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  static EncoderBlock create(ParamStore& store, const std::string& name, const NetConfig& cfg, Rng& rng);
  Var operator()(Graph& g, Var x, Index batch, Index len, const AttnMask* mask,
                 const ForwardContext& ctx) const;
};

/// Pre-norm block with self-attention, attention onto a memory sequence, and
/// feedforward, each wrapped in a residual connection.
struct CrossBlock {
  LayerNorm norm_self, norm_cross, norm_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  static CrossBlock create(ParamStore& store, const std::string& name, const NetConfig& cfg, Rng& rng);
  Var operator()(Graph& g, Var x, Var memory, Index batch, Index len, Index mem_len,
                 const AttnMask* self_mask, const ForwardContext& ctx) const;
};

}  // namespace phrc::nn
