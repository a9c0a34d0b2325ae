#pragma once

#include "ddlm/denoiser.hpp"
#include "ddlm/trace.hpp"

#include <cmath>
#include <optional>

namespace ddlm {

enum class HaltKind { None, Entropy, Patience, KL, Fixed };

inline const char* to_string(HaltKind k) {
  switch (k) {
    case HaltKind::None: return "none";
    case HaltKind::Entropy: return "entropy";
    case HaltKind::Patience: return "patience";
    case HaltKind::KL: return "kl";
    case HaltKind::Fixed: return "fixed";
  }
  return "?";
}

inline HaltKind halt_kind_from_string(const std::string& s) {
  if (s == "none") return HaltKind::None;
  if (s == "entropy") return HaltKind::Entropy;
  if (s == "patience") return HaltKind::Patience;
  if (s == "kl") return HaltKind::KL;
  if (s == "fixed") return HaltKind::Fixed;
  throw std::invalid_argument("unknown halt criterion: " + s);
}

/// Early-exit criterion configuration. Thresholds are in nats.
struct HaltConfig {
  HaltKind kind = HaltKind::None;
  double e_t = 0.0;             // entropy threshold
  int patience_p = 3;           // consecutive calm steps before halting
  int switch_threshold = 0;     // patience tolerates up to this many switches
  double d_t = 0.0;             // KL threshold
  int min_steps = 0;            // no halting before this step
  int fixed_step = 0;
  bool kl_halt_above = false;   // flip the KL comparison (literal Alg. 3 reading)

  /// KL defaults its min-steps gate to round(0.25 * N_max).
  HaltConfig resolved(int n_max) const {
    HaltConfig c = *this;
    if (c.kind == HaltKind::KL && c.min_steps == 0)
      c.min_steps = int(std::lround(0.25 * double(n_max)));
    return c;
  }
};

enum class HaltReason { None, ThresholdMet, PatienceMet, FixedStep };

struct HaltDecision {
  bool halt = false;
  HaltReason reason = HaltReason::None;
  double statistic = 0.0;
};

struct CriterionState {
  std::optional<TokenSeq> prev_tokens;
  std::optional<Mat> prev_probs;
  int patience_counter = 0;
  int step = 0;
};

/// Mean Shannon entropy (nats) over generated positions. 0*ln 0 := 0.
inline double entropy_stat(const TokenDistribution& dist, const std::vector<bool>& gen_mask) {
  if (int(gen_mask.size()) != int(dist.probs.rows()))
    throw std::invalid_argument("entropy_stat: mask size mismatch");
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < gen_mask.size(); ++i) {
    if (!gen_mask[i]) continue;
    double h = 0.0;
    for (Eigen::Index v = 0; v < dist.probs.cols(); ++v) {
      double p = dist.probs(Eigen::Index(i), v);
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("entropy_stat: no generated positions");
  return total / double(count);
}

/// Mean per-position KL(cur || prev) in nats over generated positions.
inline double kl_stat(const Mat& cur_probs, const Mat& prev_probs,
                      const std::vector<bool>& gen_mask) {
  constexpr double kEps = 1e-12;
  if (cur_probs.rows() != prev_probs.rows() || cur_probs.cols() != prev_probs.cols())
    throw std::invalid_argument("kl_stat: shape mismatch");
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < gen_mask.size(); ++i) {
    if (!gen_mask[i]) continue;
    double kl = 0.0;
    for (Eigen::Index v = 0; v < cur_probs.cols(); ++v) {
      double p = cur_probs(Eigen::Index(i), v);
      if (p > 0.0) kl += p * std::log(p / std::max(prev_probs(Eigen::Index(i), v), kEps));
    }
    total += std::max(kl, 0.0);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("kl_stat: no generated positions");
  return total / double(count);
}

inline double kl_stat(const TokenDistribution& cur, const TokenDistribution& prev,
                      const std::vector<bool>& gen_mask) {
  return kl_stat(cur.probs, prev.probs, gen_mask);
}

/// Count of generated positions whose argmax token changed.
inline int token_switches(const TokenSeq& cur, const TokenSeq& prev,
                          const std::vector<bool>& gen_mask) {
  if (cur.size() != prev.size() || cur.size() != gen_mask.size())
    throw std::invalid_argument("token_switches: length mismatch");
  int n = 0;
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (gen_mask[i] && cur[i] != prev[i]) ++n;
  return n;
}

namespace detail {

/// Shared decision logic over pre-computed statistics, used by both the live
/// criterion and offline replay so the two can never diverge.
inline HaltDecision decide(const HaltConfig& cfg, int step, double entropy,
                           std::optional<double> kl, std::optional<int> switches,
                           int& patience_counter) {
  HaltDecision d;
  switch (cfg.kind) {
    case HaltKind::None:
      break;
    case HaltKind::Entropy:
      d.statistic = entropy;
      if (entropy <= cfg.e_t && step >= cfg.min_steps) d = {true, HaltReason::ThresholdMet, entropy};
      break;
    case HaltKind::KL:
      if (kl) {
        d.statistic = *kl;
        bool met = cfg.kl_halt_above ? *kl > cfg.d_t : *kl <= cfg.d_t;
        if (met && step >= cfg.min_steps) d = {true, HaltReason::ThresholdMet, *kl};
      }
      break;
    case HaltKind::Patience:
      if (switches) {
        d.statistic = double(*switches);
        patience_counter = (*switches <= cfg.switch_threshold) ? patience_counter + 1 : 0;
        if (patience_counter >= cfg.patience_p && step >= cfg.min_steps)
          d = {true, HaltReason::PatienceMet, double(*switches)};
      }
      break;
    case HaltKind::Fixed:
      d.statistic = double(step);
      if (step == cfg.fixed_step) d = {true, HaltReason::FixedStep, double(step)};
      break;
  }
  return d;
}

}  // namespace detail

/// One live criterion evaluation; returns the decision and advances state.
inline HaltDecision step_criterion(const HaltConfig& cfg, CriterionState& state,
                                   const TokenDistribution& dist, const TokenSeq& tokens,
                                   const std::vector<bool>& gen_mask) {
  double entropy = entropy_stat(dist, gen_mask);
  std::optional<double> kl;
  std::optional<int> switches;
  if (state.prev_probs) kl = kl_stat(dist.probs, *state.prev_probs, gen_mask);
  if (state.prev_tokens) switches = token_switches(tokens, *state.prev_tokens, gen_mask);
  HaltDecision d = detail::decide(cfg, state.step, entropy, kl, switches, state.patience_counter);
  state.prev_tokens = tokens;
  state.prev_probs = dist.probs;
  ++state.step;
  return d;
}

/// Offline replay: identical decision sequence to a live run with this cfg.
/// Returns the first halting step, or nullopt if the criterion never fires.
inline std::optional<int> replay(const GenerationTrace& trace, const HaltConfig& cfg) {
  int patience_counter = 0;
  for (const auto& r : trace.records) {
    if (cfg.kind == HaltKind::KL && r.step > 0 && !r.kl_mean)
      throw std::runtime_error("trace lacks kl_mean");
    if (cfg.kind == HaltKind::Patience && r.step > 0 && !r.token_switches)
      throw std::runtime_error("trace lacks token_switches");
    HaltDecision d =
        detail::decide(cfg, r.step, r.entropy_mean, r.kl_mean, r.token_switches, patience_counter);
    if (d.halt) return r.step;
  }
  return std::nullopt;
}

struct SweepRow {
  std::string criterion;
  double threshold = 0.0;
  double mean_halt_step = 0.0;
  double frac_halted = 0.0;
};

inline double sweep_threshold_of(const HaltConfig& cfg) {
  switch (cfg.kind) {
    case HaltKind::Entropy: return cfg.e_t;
    case HaltKind::KL: return cfg.d_t;
    case HaltKind::Patience: return double(cfg.patience_p);
    case HaltKind::Fixed: return double(cfg.fixed_step);
    case HaltKind::None: return 0.0;
  }
  return 0.0;
}

/// Replays every config over every trace. Runs that never halt count at the
/// trace's final step (N_max).
inline std::vector<SweepRow> sweep(const std::vector<GenerationTrace>& traces,
                                   const std::vector<HaltConfig>& grid) {
  if (traces.empty()) throw std::invalid_argument("sweep: no traces");
  std::vector<SweepRow> rows;
  for (const auto& cfg : grid) {
    SweepRow row;
    row.criterion = to_string(cfg.kind);
    row.threshold = sweep_threshold_of(cfg);
    double total = 0.0;
    int halted = 0;
    for (const auto& tr : traces) {
      int n_max = tr.records.empty() ? 0 : tr.records.back().step;
      auto h = replay(tr, cfg);
      if (h) ++halted;
      total += double(h.value_or(n_max));
    }
    row.mean_halt_step = total / double(traces.size());
    row.frac_halted = double(halted) / double(traces.size());
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return a.criterion != b.criterion ? a.criterion < b.criterion : a.threshold < b.threshold;
  });
  return rows;
}

}  // namespace ddlm
