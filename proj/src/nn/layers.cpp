#include "phrc/nn/layers.hpp"

#include <cmath>

namespace phrc::nn {

void NetConfig::validate() const {
  if (d_model < 2 || d_model % 2 != 0) throw ConfigError("d_model must be even and >= 2");
  if (n_heads < 1 || d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
  if (d_z < 1) throw ConfigError("d_z must be >= 1");
  if (n_mix < 1) throw ConfigError("n_mix must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

nlohmann::json NetConfig::to_json() const {
  return {{"d_model", d_model}, {"n_heads", n_heads}, {"n_layers", n_layers}, {"d_ff", d_ff},
          {"d_z", d_z},         {"n_mix", n_mix},     {"dropout", dropout}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.d_z = j.value("d_z", c.d_z);
  c.n_mix = j.value("n_mix", c.n_mix);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

Mat positional_encoding(Index len, Index d_model, Index offset) {
  if (len < 1) throw ConfigError("positional_encoding: len must be >= 1");
  if (d_model < 2 || d_model % 2 != 0) throw ConfigError("positional_encoding: d_model must be even");
  Mat pe(len, d_model);
  for (Index t = 0; t < len; ++t) {
    const double pos = static_cast<double>(t + offset);
    for (Index i = 0; i < d_model / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(t, 2 * i) = std::sin(pos / freq);
      pe(t, 2 * i + 1) = std::cos(pos / freq);
    }
  }
  return pe;
}

Linear Linear::create(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng,
                      bool zero) {
  Mat w = Mat::Zero(in, out);
  if (!zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  }
  Linear l;
  l.w = store.add(name + ".w", std::move(w));
  l.b = store.add(name + ".b", Mat::Zero(1, out));
  return l;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, Index dim) {
  LayerNorm n;
  n.gamma = store.add(name + ".gamma", Mat::Ones(1, dim));
  n.beta = store.add(name + ".beta", Mat::Zero(1, dim));
  return n;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name,
                                              Index d_model, Index heads, Rng& rng) {
  if (heads < 1 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  MultiHeadAttention m;
  m.q = Linear::create(store, name + ".q", d_model, d_model, rng);
  m.k = Linear::create(store, name + ".k", d_model, d_model, rng);
  m.v = Linear::create(store, name + ".v", d_model, d_model, rng);
  m.o = Linear::create(store, name + ".o", d_model, d_model, rng);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(Graph& g, Var x_q, Var x_kv, Index batch, Index len_q, Index len_k,
                                   const AttnMask* mask) const {
  const AttentionShape sh{batch, len_q, len_k, heads};
  Var a = attention(g, q(g, x_q), k(g, x_kv), v(g, x_kv), sh, mask);
  return o(g, a);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, Index d_model, Index d_ff,
                                Rng& rng) {
  return {Linear::create(store, name + ".up", d_model, d_ff, rng),
          Linear::create(store, name + ".down", d_ff, d_model, rng)};
}

EncoderBlock EncoderBlock::create(ParamStore& store, const std::string& name, const NetConfig& cfg,
                                  Rng& rng) {
  EncoderBlock b;
  b.norm_attn = LayerNorm::create(store, name + ".ln_attn", cfg.d_model);
  b.attn = MultiHeadAttention::create(store, name + ".attn", cfg.d_model, cfg.n_heads, rng);
  b.norm_ff = LayerNorm::create(store, name + ".ln_ff", cfg.d_model);
  b.ff = FeedForward::create(store, name + ".ff", cfg.d_model, cfg.d_ff, rng);
  return b;
}

Var EncoderBlock::operator()(Graph& g, Var x, Index batch, Index len, const AttnMask* mask,
                             const ForwardContext& ctx) const {
  Var n1 = norm_attn(g, x);
  Var h = add(g, x, ctx.drop(g, attn(g, n1, n1, batch, len, len, mask)));
  return add(g, h, ctx.drop(g, ff(g, norm_ff(g, h))));
}

CrossBlock CrossBlock::create(ParamStore& store, const std::string& name, const NetConfig& cfg,
                              Rng& rng) {
  CrossBlock b;
  b.norm_self = LayerNorm::create(store, name + ".ln_self", cfg.d_model);
  b.self_attn = MultiHeadAttention::create(store, name + ".self", cfg.d_model, cfg.n_heads, rng);
  b.norm_cross = LayerNorm::create(store, name + ".ln_cross", cfg.d_model);
  b.cross_attn = MultiHeadAttention::create(store, name + ".cross", cfg.d_model, cfg.n_heads, rng);
  b.norm_ff = LayerNorm::create(store, name + ".ln_ff", cfg.d_model);
  b.ff = FeedForward::create(store, name + ".ff", cfg.d_model, cfg.d_ff, rng);
  return b;
}

Var CrossBlock::operator()(Graph& g, Var x, Var memory, Index batch, Index len, Index mem_len,
                           const AttnMask* self_mask, const ForwardContext& ctx) const {
  Var n1 = norm_self(g, x);
  Var h = add(g, x, ctx.drop(g, self_attn(g, n1, n1, batch, len, len, self_mask)));
  h = add(g, h, ctx.drop(g, cross_attn(g, norm_cross(g, h), memory, batch, len, mem_len)));
  return add(g, h, ctx.drop(g, ff(g, norm_ff(g, h))));
}

}  // namespace phrc::nn
