#include "phrc/intent/model.hpp"

#include "phrc/core/error.hpp"
#include "phrc/nn/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace phrc::intent {

using nn::AttnMask;
using nn::ForwardContext;
using nn::Linear;

namespace {

// log-variance range of the mixture head in normalised units.
constexpr double kGmmLogVarLo = -14.0;
constexpr double kGmmLogVarHi = 10.0;

Mat tile(const Mat& block, Index times) {
  Mat out(block.rows() * times, block.cols());
  for (Index i = 0; i < times; ++i) out.middleRows(i * block.rows(), block.rows()) = block;
  return out;
}

std::vector<Index> last_rows(Index batch, Index len) {
  std::vector<Index> rows(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) rows[static_cast<std::size_t>(b)] = b * len + len - 1;
  return rows;
}

VecX to_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(v.data(), static_cast<Index>(v.size()));
}

nlohmann::json from_vec(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void column_stats(const Mat& rows, VecX& mean, VecX& std) {
  mean = rows.colwise().mean().transpose();
  std = ((rows.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Index i = 0; i < std.size(); ++i)
    if (!(std(i) > 1e-9)) std(i) = 1.0;
}

}  // namespace

void LossWeights::validate() const {
  if (!(kl_weight >= 0.0) || !(recon_weight >= 0.0) || !std::isfinite(kl_weight) || !std::isfinite(recon_weight))
    throw ConfigError("loss weights must be finite and non-negative");
}

nlohmann::json Normalizer::to_json() const {
  return {{"in_mean", from_vec(in_mean)},
          {"in_std", from_vec(in_std)},
          {"out_mean", from_vec(out_mean)},
          {"out_std", from_vec(out_std)}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n;
  n.in_mean = to_vec(j.at("in_mean"));
  n.in_std = to_vec(j.at("in_std"));
  n.out_mean = to_vec(j.at("out_mean"));
  n.out_std = to_vec(j.at("out_std"));
  return n;
}

BranchModel::BranchModel(Branch branch, NetConfig cfg, Index l_obs, Index l_fut, std::uint64_t seed)
    : branch_(branch), cfg_(cfg), l_obs_(l_obs), l_fut_(l_fut), seed_(seed) {
  cfg_.validate();
  if (l_obs < 2 || l_fut < 1) throw ConfigError("window lengths must satisfy l_obs >= 2, l_fut >= 1");
  nn::Rng rng(seed);
  const Index d = cfg_.d_model, dz = cfg_.d_z, k = cfg_.n_mix;
  auto& s = params_;

  past_embed_ = Linear::create(s, "past.embed", input_dim() + d, d, rng);
  for (Index i = 0; i < cfg_.n_layers; ++i)
    past_blocks_.push_back(nn::EncoderBlock::create(s, "past.block" + std::to_string(i), cfg_, rng));
  past_norm_ = nn::LayerNorm::create(s, "past.norm", d);
  past_head_ = {Linear::create(s, "past.head.in", d, d, rng), Linear::create(s, "past.head.out", d, 2 * dz, rng)};

  fut_embed_ = Linear::create(s, "fut.embed", kOutDim + d, d, rng);
  for (Index i = 0; i < cfg_.n_layers; ++i)
    fut_blocks_.push_back(nn::CrossBlock::create(s, "fut.block" + std::to_string(i), cfg_, rng));
  fut_norm_ = nn::LayerNorm::create(s, "fut.norm", d);
  fut_head_ = {Linear::create(s, "fut.head.in", d, d, rng), Linear::create(s, "fut.head.out", d, 2 * dz, rng)};

  conv_ = Linear::create(s, "dec.conv", 3 * input_dim(), d, rng);
  conv_norm_ = nn::LayerNorm::create(s, "dec.conv_norm", d);
  dec_embed_ = Linear::create(s, "dec.embed", d + dz + d, d, rng);
  for (Index i = 0; i < cfg_.n_layers; ++i)
    dec_blocks_.push_back(nn::CrossBlock::create(s, "dec.block" + std::to_string(i), cfg_, rng));
  dec_norm_ = nn::LayerNorm::create(s, "dec.norm", d);
  gmm_out_ = Linear::create(s, "dec.gmm", d, k + 2 * k * kOutDim, rng);

  norm_.in_mean = VecX::Zero(input_dim());
  norm_.in_std = VecX::Ones(input_dim());
  norm_.out_mean = VecX::Zero(kOutDim);
  norm_.out_std = VecX::Ones(kOutDim);
}

// ---- features ----

void BranchModel::check_past(std::span<const StateSample> past) const {
  if (static_cast<Index>(past.size()) != l_obs_)
    throw ConfigError("past window has " + std::to_string(past.size()) + " samples, expected " +
                      std::to_string(l_obs_));
  if (branch_ == Branch::Human)
    for (const auto& s : past)
      if (!s.force) throw ConfigError("human branch input requires a force channel");
}

Mat BranchModel::feature_rows(std::span<const StateSample> past) const {
  const Vec3 anchor = past.back().pos;
  Mat rows(static_cast<Index>(past.size()), input_dim());
  for (std::size_t i = 0; i < past.size(); ++i) {
    const auto r = static_cast<Index>(i);
    rows.block<1, 3>(r, 0) = (past[i].pos - anchor).transpose();
    rows.block<1, 3>(r, 3) = past[i].vel.transpose();
    if (branch_ == Branch::Human) rows.block<1, 3>(r, 6) = past[i].force->transpose();
  }
  return rows;
}

Mat BranchModel::target_rows(std::span<const StateSample> future, const Vec3& anchor) const {
  Mat rows(static_cast<Index>(future.size()), kOutDim);
  for (std::size_t i = 0; i < future.size(); ++i) {
    const auto r = static_cast<Index>(i);
    rows.block<1, 3>(r, 0) = (future[i].pos - anchor).transpose();
    rows.block<1, 3>(r, 3) = future[i].vel.transpose();
  }
  return rows;
}

void BranchModel::fit_normalizer(std::span<const WindowPair> windows) {
  if (windows.empty()) throw ValidationError("cannot fit normaliser on zero windows");
  Mat in(static_cast<Index>(windows.size()) * l_obs_, input_dim());
  Mat out(static_cast<Index>(windows.size()) * l_fut_, kOutDim);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    check_past(windows[w].past);
    in.middleRows(static_cast<Index>(w) * l_obs_, l_obs_) = feature_rows(windows[w].past);
    out.middleRows(static_cast<Index>(w) * l_fut_, l_fut_) =
        target_rows(windows[w].future, windows[w].past.back().pos);
  }
  column_stats(in, norm_.in_mean, norm_.in_std);
  column_stats(out, norm_.out_mean, norm_.out_std);
}

Mat BranchModel::encode_inputs(std::span<const StateSample> past) const {
  check_past(past);
  const Mat raw = feature_rows(past);
  return ((raw.rowwise() - norm_.in_mean.transpose()).array().rowwise() / norm_.in_std.transpose().array())
      .matrix();
}

BranchModel::Batch BranchModel::make_batch(std::span<const WindowPair> windows) const {
  Batch b;
  b.size = static_cast<Index>(windows.size());
  b.past.resize(b.size * l_obs_, input_dim());
  b.future.resize(b.size * l_fut_, kOutDim);
  for (Index w = 0; w < b.size; ++w) {
    const auto& win = windows[static_cast<std::size_t>(w)];
    if (static_cast<Index>(win.future.size()) != l_fut_) throw ConfigError("future window length mismatch");
    b.past.middleRows(w * l_obs_, l_obs_) = encode_inputs(win.past);
    const Mat t = target_rows(win.future, win.past.back().pos);
    b.future.middleRows(w * l_fut_, l_fut_) =
        ((t.rowwise() - norm_.out_mean.transpose()).array().rowwise() / norm_.out_std.transpose().array())
            .matrix();
  }
  return b;
}

// ---- graph pieces ----

BranchModel::Encoded BranchModel::past_encoder(Graph& g, Var past, Index batch,
                                               const ForwardContext& ctx) const {
  const Index d = cfg_.d_model;
  Var pe = g.constant(tile(nn::positional_encoding(l_obs_, d), batch));
  Var h = past_embed_(g, nn::concat_cols(g, {past, pe}));
  for (const auto& blk : past_blocks_) h = blk(g, h, batch, l_obs_, nullptr, ctx);
  h = past_norm_(g, h);
  Var last = nn::select_rows(g, h, last_rows(batch, l_obs_));
  Var out = past_head_.mlp_out(g, nn::gelu(g, past_head_.mlp_in(g, last)));
  Var mean = nn::slice_cols(g, out, 0, cfg_.d_z);
  Var lv = nn::clamp(g, nn::slice_cols(g, out, cfg_.d_z, cfg_.d_z), -kLogVarBound, kLogVarBound);
  return {mean, lv, h};
}

BranchModel::Encoded BranchModel::future_encoder(Graph& g, Var future, Var past_memory, Index batch,
                                                 const ForwardContext& ctx) const {
  const Index d = cfg_.d_model;
  Var pe = g.constant(tile(nn::positional_encoding(l_fut_, d, l_obs_), batch));
  Var h = fut_embed_(g, nn::concat_cols(g, {future, pe}));
  for (const auto& blk : fut_blocks_) h = blk(g, h, past_memory, batch, l_fut_, l_obs_, nullptr, ctx);
  h = fut_norm_(g, h);
  Var last = nn::select_rows(g, h, last_rows(batch, l_fut_));
  Var out = fut_head_.mlp_out(g, nn::gelu(g, fut_head_.mlp_in(g, last)));
  Var mean = nn::slice_cols(g, out, 0, cfg_.d_z);
  Var lv = nn::clamp(g, nn::slice_cols(g, out, cfg_.d_z, cfg_.d_z), -kLogVarBound, kLogVarBound);
  return {mean, lv, h};
}

Var BranchModel::temporal_conv(Graph& g, Var past, Index batch) const {
  (void)batch;
  // Kernel 3 with causal zero padding: row t sees rows t, t-1, t-2.
  Var taps = nn::concat_cols(g, {past, nn::shift_rows(g, past, 1, l_obs_), nn::shift_rows(g, past, 2, l_obs_)});
  return conv_norm_(g, nn::gelu(g, conv_(g, taps)));
}

Var BranchModel::decoder_tokens(Graph& g, Var z, Var conv, Index batch) const {
  Var pe = g.constant(tile(nn::positional_encoding(l_fut_, cfg_.d_model, l_obs_), batch));
  Var zs = nn::repeat_rows(g, z, l_fut_);
  Var summary = nn::repeat_rows(g, nn::select_rows(g, conv, last_rows(batch, l_obs_)), l_fut_);
  return dec_embed_(g, nn::concat_cols(g, {pe, zs, summary}));
}

BranchModel::Decoded BranchModel::decoder_head(Graph& g, Var tokens, Var conv, Index batch,
                                               const ForwardContext& ctx) const {
  const AttnMask mask = nn::causal_mask(l_fut_);
  Var h = tokens;
  for (const auto& blk : dec_blocks_) h = blk(g, h, conv, batch, l_fut_, l_obs_, &mask, ctx);
  Var out = gmm_out_(g, dec_norm_(g, h));
  const Index k = cfg_.n_mix;
  Decoded d;
  d.logits = nn::slice_cols(g, out, 0, k);
  d.means = nn::slice_cols(g, out, k, k * kOutDim);
  d.log_vars = nn::clamp(g, nn::slice_cols(g, out, k + k * kOutDim, k * kOutDim), kGmmLogVarLo, kGmmLogVarHi);
  return d;
}

BranchModel::Elbo BranchModel::elbo(Graph& g, const Batch& batch, const LossWeights& w, const Mat& noise,
                                    const ForwardContext& ctx) const {
  if (batch.size < 1) throw ValidationError("empty batch");
  if (noise.rows() != batch.size || noise.cols() != cfg_.d_z) throw ConfigError("latent noise shape");
  const Index B = batch.size;
  Var past = g.constant(batch.past);
  Encoded prior = past_encoder(g, past, B, ctx);
  Encoded post = future_encoder(g, g.constant(batch.future), prior.memory, B, ctx);
  // z = mean + exp(log_var / 2) * noise
  Var z = nn::add(g, post.mean, nn::mul(g, nn::exp(g, nn::scale(g, post.log_var, 0.5)), g.constant(noise)));
  Var conv = temporal_conv(g, past, B);
  Decoded dec = decoder_head(g, decoder_tokens(g, z, conv, B), conv, B, ctx);

  Var kl = nn::scale(g, nn::gaussian_kl(g, post.mean, post.log_var, prior.mean, prior.log_var), 1.0 / B);
  Var recon;
  try {
    recon = nn::scale(g, nn::gmm_nll(g, dec.logits, dec.means, dec.log_vars, batch.future, cfg_.n_mix), 1.0 / B);
  } catch (const nn::NonFiniteLikelihood& e) {
    const Index step = e.row() % l_fut_;
    throw nn::NonFiniteLikelihood(step, "non-finite log-likelihood at future step " + std::to_string(step) +
                                            " of window " + std::to_string(e.row() / l_fut_));
  }
  Var loss = nn::add(g, nn::scale(g, kl, w.kl_weight), nn::scale(g, recon, w.recon_weight));
  return {loss, kl, recon};
}

// ---- inference ----

GaussianParams BranchModel::encode_past(std::span<const StateSample> past) const {
  Graph g(params_);
  Encoded e = past_encoder(g, g.constant(encode_inputs(past)), 1, {});
  return {g.value(e.mean).row(0).transpose(), g.value(e.log_var).row(0).transpose()};
}

GaussianParams BranchModel::encode_future(std::span<const StateSample> past,
                                          std::span<const StateSample> future) const {
  if (static_cast<Index>(future.size()) != l_fut_) throw ConfigError("future window length mismatch");
  Graph g(params_);
  Encoded p = past_encoder(g, g.constant(encode_inputs(past)), 1, {});
  const Mat t = target_rows(future, past.back().pos);
  const Mat tn =
      ((t.rowwise() - norm_.out_mean.transpose()).array().rowwise() / norm_.out_std.transpose().array()).matrix();
  Encoded q = future_encoder(g, g.constant(tn), p.memory, 1, {});
  return {g.value(q.mean).row(0).transpose(), g.value(q.log_var).row(0).transpose()};
}

GmmSequence BranchModel::to_sequence(const Graph& g, const Decoded& d, Index b, const Vec3& anchor) const {
  const Mat& L = g.value(d.logits);
  const Mat& Mu = g.value(d.means);
  const Mat& Lv = g.value(d.log_vars);
  const Index k = cfg_.n_mix;
  const Vec6 scale = norm_.out_std;
  const Vec6 shift = norm_.out_mean;
  GmmSequence seq(static_cast<std::size_t>(l_fut_));
  for (Index t = 0; t < l_fut_; ++t) {
    const Index r = b * l_fut_ + t;
    GmmStep& st = seq[static_cast<std::size_t>(t)];
    const double mx = L.row(r).maxCoeff();
    st.weights = (L.row(r).array() - mx).exp().transpose();
    st.weights /= st.weights.sum();
    for (Index c = 0; c < k; ++c) {
      Vec6 mean = Mu.block(r, c * kOutDim, 1, kOutDim).transpose().cwiseProduct(scale) + shift;
      mean.head<3>() += anchor;
      Vec6 var = Lv.block(r, c * kOutDim, 1, kOutDim).transpose().array().exp().matrix().cwiseProduct(
          scale.cwiseProduct(scale));
      st.means.push_back(mean);
      st.variances.push_back(var.cwiseMax(kVarianceFloor));
    }
  }
  return seq;
}

Prediction BranchModel::top_component(const GmmSequence& seq) const {
  Prediction out;
  out.reserve(seq.size());
  for (const auto& st : seq) {
    Index best = 0;
    for (Index c = 1; c < st.weights.size(); ++c)
      if (st.weights(c) > st.weights(best)) best = c;
    out.push_back(st.means[static_cast<std::size_t>(best)]);
  }
  return out;
}

GmmSequence BranchModel::decode(std::span<const StateSample> past, const VecX& z) const {
  if (z.size() != cfg_.d_z || !z.allFinite()) throw ConfigError("latent vector must be finite with d_z entries");
  Graph g(params_);
  Var x = g.constant(encode_inputs(past));
  Var conv = temporal_conv(g, x, 1);
  Decoded d = decoder_head(g, decoder_tokens(g, g.constant(z.transpose()), conv, 1), conv, 1, {});
  return to_sequence(g, d, 0, past.back().pos);
}

std::vector<Prediction> BranchModel::decode_many(std::span<const StateSample> past, const Mat& z) const {
  const Index n = z.rows();
  Graph g(params_);
  Var x = g.constant(tile(encode_inputs(past), n));
  Var conv = temporal_conv(g, x, n);
  Decoded d = decoder_head(g, decoder_tokens(g, g.constant(z), conv, n), conv, n, {});
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index b = 0; b < n; ++b) out.push_back(top_component(to_sequence(g, d, b, past.back().pos)));
  return out;
}

Prediction BranchModel::sample_most_likely(std::span<const StateSample> past) const {
  const GaussianParams p = encode_past(past);
  return top_component(decode(past, p.mean));
}

BestOfN BranchModel::sample_best_of_n(std::span<const StateSample> past, std::size_t n,
                                      std::span<const StateSample> gt, std::uint64_t seed,
                                      bool include_most_likely) const {
  if (n < 1) throw ConfigError("best-of-n requires n >= 1");
  if (static_cast<Index>(gt.size()) != l_fut_) throw ConfigError("ground truth length mismatch");
  const GaussianParams p = encode_past(past);
  const Index extra = include_most_likely ? 1 : 0;
  Mat z(static_cast<Index>(n) + extra, cfg_.d_z);
  if (include_most_likely) z.row(0) = p.mean.transpose();
  nn::Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const VecX sd = (0.5 * p.log_var.array()).exp();
  for (Index i = extra; i < z.rows(); ++i)
    for (Index j = 0; j < cfg_.d_z; ++j) z(i, j) = p.mean(j) + sd(j) * nd(rng);

  BestOfN res;
  res.candidates = decode_many(past, z);
  res.ade_m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < res.candidates.size(); ++i) {
    const double a = ade_m(res.candidates[i], gt);
    if (a < res.ade_m) {
      res.ade_m = a;
      res.index = i;
    }
  }
  res.best = res.candidates[res.index];
  return res;
}

// ---- persistence ----

void BranchModel::save(std::ostream& out) const {
  nlohmann::json net = cfg_.to_json();
  net["branch"] = to_string(branch_);
  net["l_obs"] = l_obs_;
  net["l_fut"] = l_fut_;
  net["seed"] = seed_;
  nn::write_checkpoint(out, net, params_, {{"NORM", norm_.to_json()}});
}

void BranchModel::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  save(f);
  if (!f) throw IoError("write failed: " + path.string());
}

BranchModel BranchModel::load(std::istream& in) {
  const nn::CheckpointData data = nn::read_checkpoint(in);
  const auto& j = data.netcfg;
  BranchModel m(parse_branch(j.at("branch").get<std::string>()), NetConfig::from_json(j),
                j.at("l_obs").get<Index>(), j.at("l_fut").get<Index>(), j.value("seed", std::uint64_t{0}));
  nn::load_values(data.params, m.params_);
  const auto it = data.sections.find("NORM");
  if (it == data.sections.end()) throw ParseError(0, "checkpoint has no #NORM section");
  m.norm_ = Normalizer::from_json(it->second);
  if (m.norm_.in_std.size() != m.input_dim() || m.norm_.out_std.size() != kOutDim)
    throw ParseError(0, "normalisation statistics do not match the branch");
  return m;
}

BranchModel BranchModel::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return load(f);
}

// ---- free functions ----

double ade_m(const Prediction& pred, std::span<const StateSample> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ValidationError("ADE: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i].head<3>() - gt[i].pos).norm();
  return acc / static_cast<double>(pred.size());
}

double fde_m(const Prediction& pred, std::span<const StateSample> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ValidationError("FDE: length mismatch");
  return (pred.back().head<3>() - gt.back().pos).norm();
}

Prediction constant_velocity(std::span<const StateSample> past, Index l_fut, double dt) {
  const StateSample& last = past.back();
  Prediction out;
  for (Index t = 1; t <= l_fut; ++t) {
    Vec6 s;
    s << last.pos + last.vel * (dt * static_cast<double>(t)), last.vel;
    out.push_back(s);
  }
  return out;
}

std::pair<Prediction, Prediction> predict_dual(const BranchModel& robot, const BranchModel& human,
                                               std::span<const StateSample> x_robot,
                                               std::span<const StateSample> x_human) {
  if (robot.branch() != Branch::Robot || human.branch() != Branch::Human)
    throw ConfigError("predict_dual expects a robot and a human branch model");
  if (x_robot.size() < 2 || x_human.size() < 2) throw ValidationError("windows too short");
  const double dt = x_robot[1].t - x_robot[0].t;
  if (std::abs(x_robot.back().t - x_human.back().t) > 0.5 * dt)
    throw ValidationError("stale window: robot and human histories end at different times");
  return {robot.sample_most_likely(x_robot), human.sample_most_likely(x_human)};
}

}  // namespace phrc::intent
