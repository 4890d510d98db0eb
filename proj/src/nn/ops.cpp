#include "phrc/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

namespace phrc::nn {
namespace {

void require(bool cond, const char* what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace

AttnMask causal_mask(Index len) {
  AttnMask m(len, len);
  for (Index i = 0; i < len; ++i)
    for (Index j = 0; j < len; ++j) m(i, j) = j > i;
  return m;
}

Var matmul(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Mat out = A * B;
  return g.push(std::move(out), g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    if (g.needs_grad(a)) g.grad(a).noalias() += dy * g.value(b).transpose();
    if (g.needs_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * dy;
  });
}

Var add(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  return g.push(A + B, g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    if (g.needs_grad(a)) g.grad(a) += dy;
    if (g.needs_grad(b)) g.grad(b) += dy;
  });
}

Var add_row(Graph& g, Var x, Var row) {
  const Mat& X = g.value(x);
  const Mat& R = g.value(row);
  require(R.rows() == 1 && R.cols() == X.cols(), "add_row: row must be 1 x cols(x)");
  Mat out = X.rowwise() + R.row(0);
  return g.push(std::move(out), g.needs_grad(x) || g.needs_grad(row), [x, row](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    if (g.needs_grad(x)) g.grad(x) += dy;
    if (g.needs_grad(row)) g.grad(row) += dy.colwise().sum();
  });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Mat& X = g.value(x);
  const Mat& W = g.value(w);
  const Mat& B = g.value(b);
  require(X.cols() == W.rows(), "linear: input width does not match weight rows");
  require(B.rows() == 1 && B.cols() == W.cols(), "linear: bias shape mismatch");
  Mat out = X * W;
  out.rowwise() += B.row(0);
  const bool ng = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  return g.push(std::move(out), ng, [x, w, b](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    if (g.needs_grad(x)) g.grad(x).noalias() += dy * g.value(w).transpose();
    if (g.needs_grad(w)) g.grad(w).noalias() += g.value(x).transpose() * dy;
    if (g.needs_grad(b)) g.grad(b) += dy.colwise().sum();
  });
}

Var scale(Graph& g, Var x, double s) {
  return g.push(g.value(x) * s, g.needs_grad(x), [x, s](Graph& g, int self) {
    g.grad(x) += s * g.grad(Var{self});
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "mul: shape mismatch");
  Mat out = A.cwiseProduct(B);
  return g.push(std::move(out), g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    if (g.needs_grad(a)) g.grad(a) += dy.cwiseProduct(g.value(b));
    if (g.needs_grad(b)) g.grad(b) += dy.cwiseProduct(g.value(a));
  });
}

Var exp(Graph& g, Var x) {
  Mat out = g.value(x).array().exp().matrix();
  return g.push(std::move(out), g.needs_grad(x), [x](Graph& g, int self) {
    g.grad(x) += g.grad(Var{self}).cwiseProduct(g.value(Var{self}));
  });
}

Var gelu(Graph& g, Var x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  const Mat& X = g.value(x);
  Mat out(X.rows(), X.cols());
  for (Index i = 0; i < X.size(); ++i) {
    const double v = X.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
  }
  return g.push(std::move(out), g.needs_grad(x), [x](Graph& g, int self) {
    const Mat& X = g.value(x);
    const Mat& dy = g.grad(Var{self});
    Mat& dx = g.grad(x);
    for (Index i = 0; i < X.size(); ++i) {
      const double v = X.data()[i];
      const double t = std::tanh(c * (v + a * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      dx.data()[i] += dy.data()[i] * d;
    }
  });
}

Var clamp(Graph& g, Var x, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  Mat out = g.value(x).cwiseMax(lo).cwiseMin(hi);
  return g.push(std::move(out), g.needs_grad(x), [x, lo, hi](Graph& g, int self) {
    const Mat& X = g.value(x);
    const Mat& dy = g.grad(Var{self});
    Mat& dx = g.grad(x);
    for (Index i = 0; i < X.size(); ++i) {
      const double v = X.data()[i];
      if (v > lo && v < hi) dx.data()[i] += dy.data()[i];
    }
  });
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Mat& X = g.value(x);
  const Mat& G = g.value(gamma);
  const Mat& B = g.value(beta);
  const Index n = X.rows();
  const Index c = X.cols();
  require(G.rows() == 1 && G.cols() == c && B.rows() == 1 && B.cols() == c,
          "layer_norm: gain/bias shape mismatch");
  auto xhat = std::make_shared<Mat>(n, c);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  Mat out(n, c);
  for (Index r = 0; r < n; ++r) {
    const double mean = X.row(r).mean();
    const double var = (X.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    xhat->row(r) = (X.row(r).array() - mean) * is;
    out.row(r) = xhat->row(r).cwiseProduct(G.row(0)) + B.row(0);
  }
  const bool ng = g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta);
  return g.push(std::move(out), ng, [x, gamma, beta, xhat, inv_std](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    if (g.needs_grad(gamma)) g.grad(gamma) += dy.cwiseProduct(*xhat).colwise().sum();
    if (g.needs_grad(beta)) g.grad(beta) += dy.colwise().sum();
    if (g.needs_grad(x)) {
      const Mat& G = g.value(gamma);
      Mat& dx = g.grad(x);
      const double inv_c = 1.0 / static_cast<double>(dy.cols());
      for (Index r = 0; r < dy.rows(); ++r) {
        const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(G.row(0));
        const double m1 = dxhat.sum() * inv_c;
        const double m2 = dxhat.dot(xhat->row(r)) * inv_c;
        dx.row(r).array() +=
            (*inv_std)(r) * (dxhat.array() - m1 - xhat->row(r).array() * m2);
      }
    }
  });
}

Var concat_cols(Graph& g, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = g.value(parts[0]).rows();
  Index cols = 0;
  bool ng = false;
  for (Var p : parts) {
    require(g.value(p).rows() == rows, "concat_cols: row counts differ");
    cols += g.value(p).cols();
    ng = ng || g.needs_grad(p);
  }
  Mat out(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    const Mat& v = g.value(p);
    out.middleCols(at, v.cols()) = v;
    at += v.cols();
  }
  return g.push(std::move(out), ng, [parts](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    Index at = 0;
    for (Var p : parts) {
      const Index w = g.value(p).cols();
      if (g.needs_grad(p)) g.grad(p) += dy.middleCols(at, w);
      at += w;
    }
  });
}

Var slice_cols(Graph& g, Var x, Index start, Index count) {
  const Mat& X = g.value(x);
  require(start >= 0 && count >= 0 && start + count <= X.cols(), "slice_cols: out of range");
  Mat out = X.middleCols(start, count);
  return g.push(std::move(out), g.needs_grad(x), [x, start, count](Graph& g, int self) {
    g.grad(x).middleCols(start, count) += g.grad(Var{self});
  });
}

Var select_rows(Graph& g, Var x, const std::vector<Index>& rows) {
  const Mat& X = g.value(x);
  Mat out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < X.rows(), "select_rows: index out of range");
    out.row(static_cast<Index>(i)) = X.row(rows[i]);
  }
  return g.push(std::move(out), g.needs_grad(x), [x, rows](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    Mat& dx = g.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i) dx.row(rows[i]) += dy.row(static_cast<Index>(i));
  });
}

Var repeat_rows(Graph& g, Var x, Index times) {
  require(times >= 1, "repeat_rows: times must be >= 1");
  const Mat& X = g.value(x);
  Mat out(X.rows() * times, X.cols());
  for (Index r = 0; r < X.rows(); ++r)
    for (Index t = 0; t < times; ++t) out.row(r * times + t) = X.row(r);
  return g.push(std::move(out), g.needs_grad(x), [x, times](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    Mat& dx = g.grad(x);
    for (Index r = 0; r < dx.rows(); ++r)
      for (Index t = 0; t < times; ++t) dx.row(r) += dy.row(r * times + t);
  });
}

Var shift_rows(Graph& g, Var x, Index shift, Index segment) {
  const Mat& X = g.value(x);
  require(segment >= 1 && X.rows() % segment == 0, "shift_rows: rows not a multiple of segment");
  require(shift >= 0, "shift_rows: negative shift");
  Mat out = Mat::Zero(X.rows(), X.cols());
  const Index segs = X.rows() / segment;
  for (Index s = 0; s < segs; ++s)
    for (Index t = shift; t < segment; ++t) out.row(s * segment + t) = X.row(s * segment + t - shift);
  return g.push(std::move(out), g.needs_grad(x), [x, shift, segment](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    Mat& dx = g.grad(x);
    const Index segs = dx.rows() / segment;
    for (Index s = 0; s < segs; ++s)
      for (Index t = shift; t < segment; ++t) dx.row(s * segment + t - shift) += dy.row(s * segment + t);
  });
}

Var dropout(Graph& g, Var x, double p, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  const Mat& X = g.value(x);
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(X.rows(), X.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Var m = g.constant(std::move(mask));
  return mul(g, x, m);
}

Var sum(Graph& g, Var x) {
  Mat out(1, 1);
  out(0, 0) = g.value(x).sum();
  return g.push(std::move(out), g.needs_grad(x), [x](Graph& g, int self) {
    g.grad(x).array() += g.grad(Var{self})(0, 0);
  });
}

Var weighted_sum(Graph& g, Var x, const Mat& weights) {
  const Mat& X = g.value(x);
  require(X.rows() == weights.rows() && X.cols() == weights.cols(), "weighted_sum: shape mismatch");
  Mat out(1, 1);
  out(0, 0) = X.cwiseProduct(weights).sum();
  return g.push(std::move(out), g.needs_grad(x), [x, weights](Graph& g, int self) {
    g.grad(x) += g.grad(Var{self})(0, 0) * weights;
  });
}

namespace {

// Row-wise masked softmax of `scores` in place.
void masked_softmax(Mat& scores, const AttnMask* mask) {
  for (Index i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < scores.cols(); ++j)
      if (!mask || !(*mask)(i, j)) mx = std::max(mx, scores(i, j));
    if (!std::isfinite(mx))
      throw ConfigError("attention: query row " + std::to_string(i) + " has every key blocked");
    double total = 0.0;
    for (Index j = 0; j < scores.cols(); ++j) {
      if (mask && (*mask)(i, j)) {
        scores(i, j) = 0.0;
      } else {
        scores(i, j) = std::exp(scores(i, j) - mx);
        total += scores(i, j);
      }
    }
    scores.row(i) /= total;
  }
}

}  // namespace

Mat attention_weights(const Mat& q, const Mat& k, const AttnMask* mask) {
  require(q.cols() == k.cols(), "attention: key width differs from query width");
  if (mask) require(mask->rows() == q.rows() && mask->cols() == k.rows(), "attention: mask shape");
  Mat s = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  masked_softmax(s, mask);
  return s;
}

Var attention(Graph& g, Var q, Var k, Var v, const AttentionShape& sh, const AttnMask* mask) {
  const Mat& Q = g.value(q);
  const Mat& K = g.value(k);
  const Mat& V = g.value(v);
  require(sh.batch >= 1 && sh.len_q >= 1 && sh.len_k >= 1 && sh.heads >= 1, "attention: bad shape");
  require(Q.rows() == sh.batch * sh.len_q, "attention: query rows != batch * len_q");
  require(K.rows() == sh.batch * sh.len_k && V.rows() == K.rows(), "attention: key/value rows");
  require(Q.cols() == K.cols(), "attention: query/key widths differ");
  require(Q.cols() % sh.heads == 0 && V.cols() % sh.heads == 0, "attention: width not divisible by heads");
  if (mask) require(mask->rows() == sh.len_q && mask->cols() == sh.len_k, "attention: mask shape");

  const Index dk = Q.cols() / sh.heads;
  const Index dv = V.cols() / sh.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  auto weights = std::make_shared<std::vector<Mat>>();
  weights->reserve(static_cast<std::size_t>(sh.batch * sh.heads));
  Mat out(Q.rows(), V.cols());
  for (Index b = 0; b < sh.batch; ++b) {
    for (Index h = 0; h < sh.heads; ++h) {
      // Per-head blocks are tiny; lazy products skip the blocked GEMM path.
      Mat s = Q.block(b * sh.len_q, h * dk, sh.len_q, dk)
                  .lazyProduct(K.block(b * sh.len_k, h * dk, sh.len_k, dk).transpose()) *
              inv_sqrt;
      masked_softmax(s, mask);
      out.block(b * sh.len_q, h * dv, sh.len_q, dv).noalias() =
          s.lazyProduct(V.block(b * sh.len_k, h * dv, sh.len_k, dv));
      weights->push_back(std::move(s));
    }
  }
  const bool ng = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
  return g.push(std::move(out), ng, [q, k, v, sh, dk, dv, inv_sqrt, weights](Graph& g, int self) {
    const Mat& dy = g.grad(Var{self});
    const Mat& Q = g.value(q);
    const Mat& K = g.value(k);
    const Mat& V = g.value(v);
    const bool gq = g.needs_grad(q), gk = g.needs_grad(k), gv = g.needs_grad(v);
    std::size_t idx = 0;
    for (Index b = 0; b < sh.batch; ++b) {
      for (Index h = 0; h < sh.heads; ++h, ++idx) {
        const Mat& A = (*weights)[idx];
        const auto dO = dy.block(b * sh.len_q, h * dv, sh.len_q, dv);
        const auto Vb = V.block(b * sh.len_k, h * dv, sh.len_k, dv);
        if (gv) g.grad(v).block(b * sh.len_k, h * dv, sh.len_k, dv).noalias() += A.transpose().lazyProduct(dO);
        if (!gq && !gk) continue;
        const Mat dA = dO.lazyProduct(Vb.transpose());
        // Softmax Jacobian; blocked entries have A = 0 and receive no gradient.
        Mat dS = A.cwiseProduct(dA);
        const Eigen::VectorXd rs = dS.rowwise().sum();
        dS -= A.cwiseProduct(rs.replicate(1, A.cols()));
        dS *= inv_sqrt;
        if (gq)
          g.grad(q).block(b * sh.len_q, h * dk, sh.len_q, dk).noalias() +=
              dS.lazyProduct(K.block(b * sh.len_k, h * dk, sh.len_k, dk));
        if (gk)
          g.grad(k).block(b * sh.len_k, h * dk, sh.len_k, dk).noalias() +=
              dS.transpose().lazyProduct(Q.block(b * sh.len_q, h * dk, sh.len_q, dk));
      }
    }
  });
}

Var gaussian_kl(Graph& g, Var mean_q, Var logvar_q, Var mean_p, Var logvar_p) {
  const Mat& mq = g.value(mean_q);
  const Mat& lq = g.value(logvar_q);
  const Mat& mp = g.value(mean_p);
  const Mat& lp = g.value(logvar_p);
  require(mq.rows() == mp.rows() && mq.cols() == mp.cols() && lq.rows() == mq.rows() &&
              lq.cols() == mq.cols() && lp.rows() == mq.rows() && lp.cols() == mq.cols(),
          "gaussian_kl: shape mismatch");
  const Eigen::ArrayXXd diff = (mq - mp).array();
  const Eigen::ArrayXXd inv_vp = (-lp.array()).exp();
  const Eigen::ArrayXXd vq = lq.array().exp();
  Mat out(1, 1);
  out(0, 0) = 0.5 * (lp.array() - lq.array() + (vq + diff.square()) * inv_vp - 1.0).sum();
  const bool ng = g.needs_grad(mean_q) || g.needs_grad(logvar_q) || g.needs_grad(mean_p) ||
                  g.needs_grad(logvar_p);
  return g.push(std::move(out), ng, [mean_q, logvar_q, mean_p, logvar_p](Graph& g, int self) {
    const double s = g.grad(Var{self})(0, 0);
    const Eigen::ArrayXXd diff = (g.value(mean_q) - g.value(mean_p)).array();
    const Eigen::ArrayXXd inv_vp = (-g.value(logvar_p).array()).exp();
    const Eigen::ArrayXXd vq = g.value(logvar_q).array().exp();
    if (g.needs_grad(mean_q)) g.grad(mean_q).array() += s * diff * inv_vp;
    if (g.needs_grad(mean_p)) g.grad(mean_p).array() -= s * diff * inv_vp;
    if (g.needs_grad(logvar_q)) g.grad(logvar_q).array() += s * 0.5 * (vq * inv_vp - 1.0);
    if (g.needs_grad(logvar_p))
      g.grad(logvar_p).array() += s * 0.5 * (1.0 - (vq + diff.square()) * inv_vp);
  });
}

Var gmm_nll(Graph& g, Var logits, Var means, Var logvars, const Mat& target, Index n_mix) {
  const Mat& L = g.value(logits);
  const Mat& Mu = g.value(means);
  const Mat& Lv = g.value(logvars);
  const Index n = target.rows();
  const Index d = target.cols();
  require(n_mix >= 1 && L.rows() == n && L.cols() == n_mix, "gmm_nll: logits shape");
  require(Mu.rows() == n && Mu.cols() == n_mix * d, "gmm_nll: means shape");
  require(Lv.rows() == n && Lv.cols() == n_mix * d, "gmm_nll: logvars shape");

  const double log2pi = std::log(2.0 * std::numbers::pi);
  // Responsibilities and mixture weights, cached for backward.
  auto resp = std::make_shared<Mat>(n, n_mix);
  auto pis = std::make_shared<Mat>(n, n_mix);
  double total = 0.0;
  Eigen::VectorXd comp(n_mix);
  for (Index r = 0; r < n; ++r) {
    const double lmax = L.row(r).maxCoeff();
    const double lse_logits = lmax + std::log((L.row(r).array() - lmax).exp().sum());
    for (Index k = 0; k < n_mix; ++k) {
      const auto mu = Mu.block(r, k * d, 1, d).array();
      const auto lv = Lv.block(r, k * d, 1, d).array();
      const double quad = ((target.row(r).array() - mu).square() * (-lv).exp()).sum();
      const double log_pi = L(r, k) - lse_logits;
      (*pis)(r, k) = std::exp(log_pi);
      comp(k) = log_pi - 0.5 * (static_cast<double>(d) * log2pi + lv.sum() + quad);
    }
    const double cmax = comp.maxCoeff();
    const double ll = cmax + std::log((comp.array() - cmax).exp().sum());
    if (!std::isfinite(ll))
      throw NonFiniteLikelihood(r, "gmm_nll: non-finite log-likelihood at row " + std::to_string(r));
    resp->row(r) = (comp.array() - ll).exp().matrix().transpose();
    total -= ll;
  }
  Mat out(1, 1);
  out(0, 0) = total;
  const bool ng = g.needs_grad(logits) || g.needs_grad(means) || g.needs_grad(logvars);
  return g.push(std::move(out), ng, [logits, means, logvars, target, n_mix, resp, pis](Graph& g, int self) {
    const double s = g.grad(Var{self})(0, 0);
    const Index d = target.cols();
    if (g.needs_grad(logits)) g.grad(logits) += s * (*pis - *resp);
    const bool gm = g.needs_grad(means), gl = g.needs_grad(logvars);
    if (!gm && !gl) return;
    const Mat& Mu = g.value(means);
    const Mat& Lv = g.value(logvars);
    for (Index r = 0; r < target.rows(); ++r) {
      for (Index k = 0; k < n_mix; ++k) {
        const double gamma = (*resp)(r, k);
        const Eigen::ArrayXd diff = (target.row(r) - Mu.block(r, k * d, 1, d)).transpose().array();
        const Eigen::ArrayXd inv_var = (-Lv.block(r, k * d, 1, d).transpose().array()).exp();
        if (gm) g.grad(means).block(r, k * d, 1, d) -= (s * gamma * diff * inv_var).matrix().transpose();
        if (gl)
          g.grad(logvars).block(r, k * d, 1, d) +=
              (s * gamma * 0.5 * (1.0 - diff.square() * inv_var)).matrix().transpose();
      }
    }
  });
}

}  // namespace phrc::nn
