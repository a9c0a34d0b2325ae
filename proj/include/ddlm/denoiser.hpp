#pragma once

#include "ddlm/diffusion.hpp"
#include "ddlm/embedding.hpp"
#include "ddlm/net.hpp"

namespace ddlm {

/// Per-position categorical p(x | X(t), t).
struct TokenDistribution {
  Mat logits;  // seq_len x vocab
  Mat probs;   // softmax rows; strictly positive, rows sum to 1
};

inline Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline TokenDistribution distribution_from_logits(Mat logits) {
  TokenDistribution d;
  d.probs = softmax_rows(logits);
  d.logits = std::move(logits);
  return d;
}

/// The diffusion denoiser: normalized embedding table + transformer trunk.
struct DenoiserModel {
  EmbeddingTable table;
  NetParams net;
};

template <typename F>
void for_each_tensor(DenoiserModel& m, F&& f) {
  f("embedding", m.table.matrix);
  for_each_tensor(m.net, std::forward<F>(f));
}

inline TokenDistribution denoise(const NetParams& params, const NoisyState& state) {
  detail::NetCache cache;
  return distribution_from_logits(net_forward(params, state.X, state.t, cache));
}

inline TokenDistribution denoise(const DenoiserModel& model, const NoisyState& state) {
  return denoise(model.net, state);
}

/// Score interpolation: X0_hat row i = sum_v probs[i,v] * embedding[v].
inline DenoisedEstimate interpolate_x0(const TokenDistribution& dist, const EmbeddingTable& table) {
  if (int(dist.probs.cols()) != table.vocab_size())
    throw std::invalid_argument("interpolate_x0: vocab mismatch");
  DenoisedEstimate est;
  est.X0_hat.noalias() = dist.probs * table.matrix;
  return est;
}

/// Argmax decoding, lowest id on ties.
inline TokenSeq argmax_tokens(const TokenDistribution& dist) {
  TokenSeq toks(std::size_t(dist.probs.rows()));
  for (Eigen::Index i = 0; i < dist.probs.rows(); ++i) {
    Eigen::Index best = 0;
    dist.probs.row(i).maxCoeff(&best);
    toks[std::size_t(i)] = int(best);
  }
  return toks;
}

}  // namespace ddlm
