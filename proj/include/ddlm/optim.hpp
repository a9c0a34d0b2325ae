#pragma once

#include "ddlm/net.hpp"

#include <map>

namespace ddlm {

/// Warmup then cosine decay to zero over total_steps.
inline double cosine_warmup_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps,
                               std::int64_t total_steps) {
  if (warmup_steps > 0 && step < warmup_steps) return base_lr * double(step + 1) / double(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  double prog = double(step - warmup_steps) / double(total_steps - warmup_steps);
  prog = std::clamp(prog, 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * prog));
}

/// Adam with per-tensor moments addressed by tensor name.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Scale gradients to global norm <= max_norm. Returns the pre-clip norm.
  template <typename P>
  static double clip_global_norm(P& grads, double max_norm) {
    double sq = 0.0;
    for_each_tensor(grads, [&](const std::string&, Mat& m) { sq += m.squaredNorm(); });
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
      double s = max_norm / norm;
      for_each_tensor(grads, [&](const std::string&, Mat& m) { m *= s; });
    }
    return norm;
  }

  template <typename P>
  void step(P& params, const P& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, double(t_));
    double bc2 = 1.0 - std::pow(beta2, double(t_));
    std::vector<std::pair<std::string, Mat*>> ps;
    std::vector<const Mat*> gs;
    for_each_tensor(params, [&](const std::string& n, Mat& m) { ps.emplace_back(n, &m); });
    for_each_tensor(const_cast<P&>(grads), [&](const std::string&, Mat& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Mat& w = *ps[i].second;
      const Mat& g = *gs[i];
      Mat& m = moment1_[ps[i].first];
      Mat& v = moment2_[ps[i].first];
      if (m.size() == 0) m = Mat::Zero(w.rows(), w.cols());
      if (v.size() == 0) v = Mat::Zero(w.rows(), w.cols());
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }
  }

  std::int64_t step_count() const { return t_; }
  std::map<std::string, Mat>& moments1() { return moment1_; }
  std::map<std::string, Mat>& moments2() { return moment2_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  std::int64_t t_ = 0;
  std::map<std::string, Mat> moment1_;
  std::map<std::string, Mat> moment2_;
};

}  // namespace ddlm
