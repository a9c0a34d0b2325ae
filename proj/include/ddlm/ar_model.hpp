#pragma once

#include "ddlm/denoiser.hpp"

namespace ddlm {

/// Small causal LM over the same vocabulary, used as the in-repo stand-in
/// for the external AR-NLL scorer. Its embedding table is learned freely
/// (no sphere normalization) and the trunk runs with a constant time input.
struct ARModel {
  Mat embedding;  // vocab x d_in
  NetParams net;  // causal

  static constexpr double kFixedTime = 1.0;
};

template <typename F>
void for_each_tensor(ARModel& m, F&& f) {
  f("embedding", m.embedding);
  for_each_tensor(m.net, std::forward<F>(f));
}

inline ARModel init_ar_model(const NetConfig& base, Rng& rng) {
  NetConfig cfg = base;
  cfg.causal = true;
  ARModel m;
  m.net = init_net(cfg, rng);
  m.embedding = Mat(cfg.vocab, cfg.d_in);
  rng.fill_normal(m.embedding);
  m.embedding *= 0.1;
  return m;
}

inline Mat ar_input_rows(const ARModel& m, const TokenSeq& tokens) {
  Mat x(Eigen::Index(tokens.size()), m.embedding.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= int(m.embedding.rows()))
      throw std::out_of_range("token id out of range");
    x.row(Eigen::Index(i)) = m.embedding.row(tokens[i]);
  }
  return x;
}

/// Mean per-token NLL (nats) of continuation tokens given the prefix and the
/// preceding continuation tokens. Position j is scored from logits row j-1,
/// so a continuation starting at absolute index 0 has its first token skipped.
inline double ar_nll(const ARModel& m, const TokenSeq& prefix, const TokenSeq& continuation) {
  if (continuation.empty()) throw std::invalid_argument("ar_nll: empty continuation");
  TokenSeq full = prefix;
  full.insert(full.end(), continuation.begin(), continuation.end());
  int seq_len = m.net.cfg.seq_len;
  if (int(full.size()) > seq_len) throw std::invalid_argument("ar_nll: sequence exceeds seq_len");
  int used = int(full.size());
  full.resize(std::size_t(seq_len), 0);

  detail::NetCache cache;
  Mat logits = net_forward(m.net, ar_input_rows(m, full), ARModel::kFixedTime, cache);
  Mat logp(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    double lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    logp.row(i) = logits.row(i).array() - lse;
  }
  double total = 0.0;
  int count = 0;
  int start = int(prefix.size());
  for (int j = std::max(start, 1); j < used; ++j) {
    total -= logp(j - 1, full[std::size_t(j)]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("ar_nll: nothing to score");
  return total / double(count);
}

}  // namespace ddlm
