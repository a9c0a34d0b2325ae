#pragma once

#include "ddlm/common.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace ddlm {

/// Transformer trunk shared by the diffusion denoiser (bidirectional,
/// conditioned on t via conditional layer normalization) and the causal
/// autoregressive reference model (which passes a constant t).
struct NetConfig {
  int vocab = 0;
  int d_in = 0;      // input row width (embedding dim)
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 2;
  int seq_len = 64;
  bool causal = false;

  static constexpr int kTimeDim = 16;
  int d_ff() const { return 4 * d_model; }
  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (vocab < 2 || d_in < 1 || d_model < 1 || n_layers < 1 || seq_len < 1)
      throw std::invalid_argument("invalid net config");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw std::invalid_argument("d_model must be divisible by n_heads");
  }
};

struct LayerParams {
  Mat ln1_g0, ln1_b0, ln1_gw, ln1_bw;
  Mat wqkv, bqkv, wo, bo;
  Mat ln2_g0, ln2_b0, ln2_gw, ln2_bw;
  Mat w1, b1, w2, b2;
};

struct NetParams {
  NetConfig cfg;
  Mat w_in, b_in;  // d_in x d_model, 1 x d_model
  Mat pos;         // seq_len x d_model
  std::vector<LayerParams> layers;
  Mat lnf_g0, lnf_b0, lnf_gw, lnf_bw;
  Mat w_out, b_out;  // d_model x vocab, 1 x vocab
};

/// Visit every parameter tensor with a stable name; iteration order is fixed
/// and shared by the optimizer, checkpoints, and gradient checks.
template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  f("w_in", p.w_in);
  f("b_in", p.b_in);
  f("pos", p.pos);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    std::string pre = "layer" + std::to_string(l) + ".";
    f(pre + "ln1_g0", L.ln1_g0);
    f(pre + "ln1_b0", L.ln1_b0);
    f(pre + "ln1_gw", L.ln1_gw);
    f(pre + "ln1_bw", L.ln1_bw);
    f(pre + "wqkv", L.wqkv);
    f(pre + "bqkv", L.bqkv);
    f(pre + "wo", L.wo);
    f(pre + "bo", L.bo);
    f(pre + "ln2_g0", L.ln2_g0);
    f(pre + "ln2_b0", L.ln2_b0);
    f(pre + "ln2_gw", L.ln2_gw);
    f(pre + "ln2_bw", L.ln2_bw);
    f(pre + "w1", L.w1);
    f(pre + "b1", L.b1);
    f(pre + "w2", L.w2);
    f(pre + "b2", L.b2);
  }
  f("lnf_g0", p.lnf_g0);
  f("lnf_b0", p.lnf_b0);
  f("lnf_gw", p.lnf_gw);
  f("lnf_bw", p.lnf_bw);
  f("w_out", p.w_out);
  f("b_out", p.b_out);
}

inline NetParams init_net(const NetConfig& cfg, Rng& rng, double scale = 0.02) {
  cfg.validate();
  NetParams p;
  p.cfg = cfg;
  auto randn = [&](int r, int c) {
    Mat m(r, c);
    rng.fill_normal(m);
    return Mat(m * scale);
  };
  int dm = cfg.d_model, td = NetConfig::kTimeDim;
  p.w_in = randn(cfg.d_in, dm);
  p.b_in = Mat::Zero(1, dm);
  p.pos = randn(cfg.seq_len, dm);
  p.layers.resize(std::size_t(cfg.n_layers));
  for (auto& L : p.layers) {
    L.ln1_g0 = Mat::Ones(1, dm);
    L.ln1_b0 = Mat::Zero(1, dm);
    L.ln1_gw = Mat::Zero(td, dm);
    L.ln1_bw = Mat::Zero(td, dm);
    L.wqkv = randn(dm, 3 * dm);
    L.bqkv = Mat::Zero(1, 3 * dm);
    L.wo = randn(dm, dm);
    L.bo = Mat::Zero(1, dm);
    L.ln2_g0 = Mat::Ones(1, dm);
    L.ln2_b0 = Mat::Zero(1, dm);
    L.ln2_gw = Mat::Zero(td, dm);
    L.ln2_bw = Mat::Zero(td, dm);
    L.w1 = randn(dm, cfg.d_ff());
    L.b1 = Mat::Zero(1, cfg.d_ff());
    L.w2 = randn(cfg.d_ff(), dm);
    L.b2 = Mat::Zero(1, dm);
  }
  p.lnf_g0 = Mat::Ones(1, dm);
  p.lnf_b0 = Mat::Zero(1, dm);
  p.lnf_gw = Mat::Zero(td, dm);
  p.lnf_bw = Mat::Zero(td, dm);
  p.w_out = randn(dm, cfg.vocab);
  p.b_out = Mat::Zero(1, cfg.vocab);
  return p;
}

template <typename P>
P zeros_like(const P& p) {
  P g = p;
  for_each_tensor(g, [](const std::string&, Mat& m) { m.setZero(); });
  return g;
}

template <typename P>
void accumulate(P& acc, const P& g) {
  // matched iteration: both sides share the same tensor order
  std::vector<Mat*> lhs;
  std::vector<const Mat*> rhs;
  for_each_tensor(acc, [&](const std::string&, Mat& m) { lhs.push_back(&m); });
  for_each_tensor(const_cast<P&>(g), [&](const std::string&, Mat& m) { rhs.push_back(&m); });
  for (std::size_t i = 0; i < lhs.size(); ++i) *lhs[i] += *rhs[i];
}

namespace detail {

constexpr double kLnEps = 1e-5;

inline Vec time_features(double t) {
  if (!(t > 0.0)) throw std::invalid_argument("time features need t > 0");
  Vec f(NetConfig::kTimeDim);
  double s = std::log(t);
  // Geometric frequencies from 0.25 to 4: slow enough that sparsely-sampled
  // time regions (very small t) interpolate smoothly from their neighbors.
  for (int k = 0; k < NetConfig::kTimeDim / 2; ++k) {
    double w = 0.25 * std::pow(2.0, 4.0 * k / (NetConfig::kTimeDim / 2 - 1));
    f(2 * k) = std::sin(s * w);
    f(2 * k + 1) = std::cos(s * w);
  }
  return f;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

struct LnCache {
  Mat xhat;           // seq x d_model
  Vec inv;            // per-row 1/sqrt(var + eps)
  Eigen::RowVectorXd gamma, beta;  // shared across rows (functions of t)
};

inline Mat ln_forward(const Mat& x, const Mat& g0, const Mat& b0, const Mat& gw, const Mat& bw,
                      const Vec& tfeat, LnCache& c) {
  int n = int(x.rows()), d = int(x.cols());
  c.gamma = g0.row(0) + (tfeat.transpose() * gw);
  c.beta = b0.row(0) + (tfeat.transpose() * bw);
  c.xhat.resize(n, d);
  c.inv.resize(n);
  Mat y(n, d);
  for (int i = 0; i < n; ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    double inv = 1.0 / std::sqrt(var + kLnEps);
    c.inv(i) = inv;
    c.xhat.row(i) = (x.row(i).array() - mu) * inv;
    y.row(i) = c.xhat.row(i).cwiseProduct(c.gamma) + c.beta;
  }
  return y;
}

/// Returns dx; accumulates parameter grads (dgamma routed through g0/gw).
inline Mat ln_backward(const Mat& dy, const LnCache& c, const Vec& tfeat, Mat& dg0, Mat& db0,
                       Mat& dgw, Mat& dbw) {
  int n = int(dy.rows()), d = int(dy.cols());
  Eigen::RowVectorXd dgamma = Eigen::RowVectorXd::Zero(d);
  Eigen::RowVectorXd dbeta = Eigen::RowVectorXd::Zero(d);
  Mat dx(n, d);
  for (int i = 0; i < n; ++i) {
    dgamma += dy.row(i).cwiseProduct(c.xhat.row(i));
    dbeta += dy.row(i);
    Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(c.gamma);
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
    dx.row(i) = (dxhat.array() - m1 - c.xhat.row(i).array() * m2) * c.inv(i);
  }
  dg0.row(0) += dgamma;
  db0.row(0) += dbeta;
  dgw += tfeat * dgamma;
  dbw += tfeat * dbeta;
  return dx;
}

struct LayerCache {
  Mat x_in;
  LnCache ln1;
  Mat ln1_out;
  Mat qkv;
  std::vector<Mat> P;  // per-head attention weights
  Mat attn_concat;
  Mat x_mid;
  LnCache ln2;
  Mat ln2_out;
  Mat h_pre, h_act;
};

struct NetCache {
  Vec tfeat;
  double c_in = 1.0;  // input preconditioning scale 1/sqrt(1 + t^2)
  Mat input;          // preconditioned input rows (seq x d_in)
  Mat x0;
  std::vector<LayerCache> layers;
  Mat xf_in;
  LnCache lnf;
  Mat lnf_out;
  Mat logits;
};

}  // namespace detail

/// Deterministic forward pass for one sequence. input: seq_len x d_in.
inline Mat net_forward(const NetParams& p, const Mat& input, double t, detail::NetCache& c) {
  const NetConfig& cfg = p.cfg;
  if (int(input.rows()) != cfg.seq_len || int(input.cols()) != cfg.d_in)
    throw std::invalid_argument("net_forward: input shape mismatch");
  int dm = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim();
  double scale = 1.0 / std::sqrt(double(hd));

  c.tfeat = detail::time_features(t);
  // Precondition the input so its scale is comparable across noise levels;
  // rows are O(sqrt(d)) signal plus t-scaled noise, so divide by sqrt(1 + t^2).
  c.c_in = 1.0 / std::sqrt(1.0 + t * t);
  c.input = input * c.c_in;
  c.x0 = (c.input * p.w_in).rowwise() + p.b_in.row(0);
  c.x0 += p.pos;

  Mat x = c.x0;
  c.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    auto& lc = c.layers[l];
    lc.x_in = x;
    lc.ln1_out = detail::ln_forward(x, L.ln1_g0, L.ln1_b0, L.ln1_gw, L.ln1_bw, c.tfeat, lc.ln1);
    lc.qkv = (lc.ln1_out * L.wqkv).rowwise() + L.bqkv.row(0);
    lc.attn_concat.resize(cfg.seq_len, dm);
    lc.P.assign(std::size_t(H), Mat());
    for (int h = 0; h < H; ++h) {
      auto Q = lc.qkv.middleCols(h * hd, hd);
      auto K = lc.qkv.middleCols(dm + h * hd, hd);
      auto V = lc.qkv.middleCols(2 * dm + h * hd, hd);
      Mat S = scale * (Q * K.transpose());
      if (cfg.causal)
        for (int i = 0; i < cfg.seq_len; ++i)
          for (int j = i + 1; j < cfg.seq_len; ++j) S(i, j) = -1e30;
      Mat& P = lc.P[std::size_t(h)];
      P.resize(cfg.seq_len, cfg.seq_len);
      for (int i = 0; i < cfg.seq_len; ++i) {
        double mx = S.row(i).maxCoeff();
        P.row(i) = (S.row(i).array() - mx).exp();
        P.row(i) /= P.row(i).sum();
      }
      lc.attn_concat.middleCols(h * hd, hd).noalias() = P * V;
    }
    lc.x_mid = lc.x_in + ((lc.attn_concat * L.wo).rowwise() + L.bo.row(0));
    lc.ln2_out =
        detail::ln_forward(lc.x_mid, L.ln2_g0, L.ln2_b0, L.ln2_gw, L.ln2_bw, c.tfeat, lc.ln2);
    lc.h_pre = (lc.ln2_out * L.w1).rowwise() + L.b1.row(0);
    lc.h_act = lc.h_pre.unaryExpr([](double v) { return detail::gelu(v); });
    x = lc.x_mid + ((lc.h_act * L.w2).rowwise() + L.b2.row(0));
  }
  c.xf_in = x;
  c.lnf_out = detail::ln_forward(x, p.lnf_g0, p.lnf_b0, p.lnf_gw, p.lnf_bw, c.tfeat, c.lnf);
  c.logits = (c.lnf_out * p.w_out).rowwise() + p.b_out.row(0);
  if (!c.logits.allFinite()) throw std::runtime_error("numerical overflow in denoiser");
  return c.logits;
}

/// Backward pass matching net_forward. Accumulates parameter gradients into
/// g (same layout as p) and returns the gradient w.r.t. the input rows.
inline Mat net_backward(const NetParams& p, const detail::NetCache& c, const Mat& dlogits,
                        NetParams& g) {
  const NetConfig& cfg = p.cfg;
  int dm = cfg.d_model, H = cfg.n_heads, hd = cfg.head_dim();
  double scale = 1.0 / std::sqrt(double(hd));

  g.w_out.noalias() += c.lnf_out.transpose() * dlogits;
  g.b_out.row(0) += dlogits.colwise().sum();
  Mat dlnf_out = dlogits * p.w_out.transpose();
  Mat dx = detail::ln_backward(dlnf_out, c.lnf, c.tfeat, g.lnf_g0, g.lnf_b0, g.lnf_gw, g.lnf_bw);

  for (int l = int(p.layers.size()) - 1; l >= 0; --l) {
    const auto& L = p.layers[std::size_t(l)];
    auto& G = g.layers[std::size_t(l)];
    const auto& lc = c.layers[std::size_t(l)];

    // feed-forward branch
    Mat dff = dx;  // gradient of block output w.r.t. ff output (residual add)
    Mat dh_act = dff * L.w2.transpose();
    G.w2.noalias() += lc.h_act.transpose() * dff;
    G.b2.row(0) += dff.colwise().sum();
    Mat dh_pre = dh_act.cwiseProduct(lc.h_pre.unaryExpr([](double v) { return detail::gelu_grad(v); }));
    G.w1.noalias() += lc.ln2_out.transpose() * dh_pre;
    G.b1.row(0) += dh_pre.colwise().sum();
    Mat dln2_out = dh_pre * L.w1.transpose();
    Mat dx_mid = dx + detail::ln_backward(dln2_out, lc.ln2, c.tfeat, G.ln2_g0, G.ln2_b0, G.ln2_gw,
                                          G.ln2_bw);

    // attention branch
    Mat dattn_out = dx_mid;
    Mat dattn_concat = dattn_out * L.wo.transpose();
    G.wo.noalias() += lc.attn_concat.transpose() * dattn_out;
    G.bo.row(0) += dattn_out.colwise().sum();
    Mat dqkv = Mat::Zero(cfg.seq_len, 3 * dm);
    for (int h = 0; h < H; ++h) {
      auto K = lc.qkv.middleCols(dm + h * hd, hd);
      auto Q = lc.qkv.middleCols(h * hd, hd);
      auto V = lc.qkv.middleCols(2 * dm + h * hd, hd);
      const Mat& P = lc.P[std::size_t(h)];
      Mat dO = dattn_concat.middleCols(h * hd, hd);
      Mat dP = dO * V.transpose();
      dqkv.middleCols(2 * dm + h * hd, hd).noalias() = P.transpose() * dO;
      Mat dS(cfg.seq_len, cfg.seq_len);
      for (int i = 0; i < cfg.seq_len; ++i) {
        double dot = dP.row(i).dot(P.row(i));
        dS.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
      }
      dqkv.middleCols(h * hd, hd).noalias() = scale * (dS * K);
      dqkv.middleCols(dm + h * hd, hd).noalias() = scale * (dS.transpose() * Q);
    }
    G.wqkv.noalias() += lc.ln1_out.transpose() * dqkv;
    G.bqkv.row(0) += dqkv.colwise().sum();
    Mat dln1_out = dqkv * L.wqkv.transpose();
    dx = dx_mid + detail::ln_backward(dln1_out, lc.ln1, c.tfeat, G.ln1_g0, G.ln1_b0, G.ln1_gw,
                                      G.ln1_bw);
  }

  g.pos += dx;
  g.w_in.noalias() += c.input.transpose() * dx;
  g.b_in.row(0) += dx.colwise().sum();
  // chain through the input preconditioning scale
  return c.c_in * (dx * p.w_in.transpose());
}

}  // namespace ddlm
