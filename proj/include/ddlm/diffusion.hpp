#pragma once

#include "ddlm/common.hpp"

#include <vector>

namespace ddlm {

/// Sampler state: continuous embeddings X(t) at noise level t. Positions
/// flagged in cond_mask hold clean conditioning embeddings and are never
/// touched by noise or Euler updates.
struct NoisyState {
  Mat X;       // seq_len x d
  double t = 0.0;
  std::vector<bool> cond_mask;  // true = clean conditioning position

  int seq_len() const { return int(X.rows()); }
  int d() const { return int(X.cols()); }
};

/// X0_hat: probability-weighted average of embedding rows, so every row lies
/// in the convex hull of the embedding sphere (norm <= sqrt(d)).
struct DenoisedEstimate {
  Mat X0_hat;  // seq_len x d
};

/// Variance-exploding forward law: X = clean + t * eps on noised positions.
inline NoisyState add_noise(const Mat& clean, const std::vector<bool>& mask, double t,
                            std::uint64_t rng_seed) {
  if (t < 0.0) throw std::invalid_argument("noise level must be >= 0");
  if (int(mask.size()) != int(clean.rows())) throw std::invalid_argument("mask/clean size mismatch");
  NoisyState s;
  s.X = clean;
  s.t = t;
  s.cond_mask.resize(mask.size());
  Rng rng = Rng::derive(rng_seed, 0x6e6f6973u);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    s.cond_mask[i] = !mask[i];
    if (mask[i] && t > 0.0)
      for (Eigen::Index j = 0; j < clean.cols(); ++j) s.X(Eigen::Index(i), j) += t * rng.normal();
  }
  return s;
}

/// Score estimate S(X(t), t) = (X0_hat - X) / t^2.
inline Mat score(const NoisyState& state, const DenoisedEstimate& est) {
  if (state.t <= 0.0) throw std::invalid_argument("score singular at t=0");
  return (est.X0_hat - state.X) / (state.t * state.t);
}

/// Probability-flow Euler step for dX/dt = (X - X0_hat)/t:
///   X_next = X + (t_next - t) * (X - X0_hat) / t
/// Conditioned positions are carried over bit-exactly.
inline NoisyState euler_step(const NoisyState& state, const DenoisedEstimate& est, double t_next) {
  if (!(t_next < state.t) || t_next < 0.0)
    throw std::invalid_argument("euler_step requires 0 <= t_next < t");
  NoisyState next;
  next.t = t_next;
  next.cond_mask = state.cond_mask;
  next.X = state.X;
  double coef = (t_next - state.t) / state.t;
  for (int i = 0; i < state.seq_len(); ++i) {
    if (state.cond_mask[std::size_t(i)]) continue;
    next.X.row(i) += coef * (state.X.row(i) - est.X0_hat.row(i));
  }
  return next;
}

}  // namespace ddlm
