#pragma once

#include "ddlm/denoiser.hpp"
#include "ddlm/halting.hpp"
#include "ddlm/schedule.hpp"
#include "ddlm/threading.hpp"
#include "ddlm/trace.hpp"

namespace ddlm {

enum class Conditioning { Unconditional, Prefix, Enclosed };

inline const char* to_string(Conditioning c) {
  switch (c) {
    case Conditioning::Unconditional: return "unconditional";
    case Conditioning::Prefix: return "prefix";
    case Conditioning::Enclosed: return "enclosed";
  }
  return "?";
}

inline Conditioning conditioning_from_string(const std::string& s) {
  if (s == "unconditional") return Conditioning::Unconditional;
  if (s == "prefix") return Conditioning::Prefix;
  if (s == "enclosed") return Conditioning::Enclosed;
  throw std::invalid_argument("unknown conditioning mode: " + s);
}

enum class TraceVerbosity { Stats, StatsStates };

struct GenConfig {
  int n_steps = 200;        // N_max
  double noise_scale = 1.0;
  Conditioning conditioning = Conditioning::Unconditional;
  int cond_tokens = 0;      // n for prefix(n) / enclosed(n)
  std::uint64_t seed = 0;
  HaltConfig halt;          // kind None = run to completion
  TraceVerbosity record = TraceVerbosity::Stats;
  GridKind grid = GridKind::Linear;

  nlohmann::json to_json() const {
    return {{"n_steps", n_steps},
            {"noise_scale", noise_scale},
            {"conditioning", to_string(conditioning)},
            {"cond_tokens", cond_tokens},
            {"seed", seed},
            {"halt", to_string(halt.kind)},
            {"threshold", sweep_threshold_of(halt)}};
  }
};

/// true = generated position under the given conditioning mode. Enclosed-n
/// pins n/2 clean tokens at each end.
inline std::vector<bool> generation_mask(const GenConfig& cfg, int seq_len) {
  std::vector<bool> gen(std::size_t(seq_len), true);
  switch (cfg.conditioning) {
    case Conditioning::Unconditional:
      break;
    case Conditioning::Prefix:
      for (int i = 0; i < std::min(cfg.cond_tokens, seq_len); ++i) gen[std::size_t(i)] = false;
      break;
    case Conditioning::Enclosed: {
      int head = cfg.cond_tokens / 2, tail = cfg.cond_tokens - head;
      for (int i = 0; i < std::min(head, seq_len); ++i) gen[std::size_t(i)] = false;
      for (int i = std::max(0, seq_len - tail); i < seq_len; ++i) gen[std::size_t(i)] = false;
      break;
    }
  }
  return gen;
}

/// Generated positions start as noise_scale * t_max * N(0, I); conditioned
/// positions hold clean normalized prompt embeddings for the whole run.
inline NoisyState init_state(const GenConfig& cfg, const TokenSeq* prompt,
                             const EmbeddingTable& table, const NoiseSchedule& schedule) {
  int seq_len = 0;
  std::vector<bool> gen;
  if (cfg.conditioning != Conditioning::Unconditional) {
    if (!prompt) throw std::invalid_argument("conditioning mode requires a prompt");
  }
  seq_len = prompt ? int(prompt->size()) : 0;
  if (seq_len == 0) throw std::invalid_argument("init_state needs a prompt or explicit length");
  gen = generation_mask(cfg, seq_len);

  NoisyState st;
  st.t = schedule.grid.front();
  st.X = Mat::Zero(seq_len, table.d());
  st.cond_mask.resize(std::size_t(seq_len));
  Rng rng = Rng::derive(cfg.seed, 0x696e6974u, 0x67656eu);
  double init_scale = cfg.noise_scale * schedule.t_max;
  for (int i = 0; i < seq_len; ++i) {
    st.cond_mask[std::size_t(i)] = !gen[std::size_t(i)];
    if (gen[std::size_t(i)]) {
      for (int j = 0; j < table.d(); ++j) st.X(i, j) = init_scale * rng.normal();
    } else {
      st.X.row(i) = table.matrix.row((*prompt)[std::size_t(i)]);
    }
  }
  return st;
}

struct GenResult {
  TokenSeq tokens;
  int halt_step = 0;
  bool halted_early = false;
  GenerationTrace trace;
};

namespace detail {

inline double mean_row_norm(const Mat& m, const std::vector<bool>& gen) {
  double total = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!gen[std::size_t(i)]) continue;
    total += m.row(i).norm();
    ++count;
  }
  return count > 0 ? total / double(count) : 0.0;
}

}  // namespace detail

/// The generation loop: denoise -> record -> criterion -> Euler, over the
/// decreasing time grid. The criterion sees the distribution produced
/// before the Euler update, matching the ordering of the halting algorithms.
inline GenResult generate(const DenoiserModel& model, const GenConfig& cfg, const TokenSeq& prompt,
                          double t_max, const std::string& checkpoint_id = "") {
  if (cfg.n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  int seq_len = model.net.cfg.seq_len;
  if (int(prompt.size()) != seq_len)
    throw std::invalid_argument("prompt length must equal model seq_len");
  NoiseSchedule schedule = make_grid(t_max, 0.01 * t_max, cfg.n_steps, cfg.grid, cfg.noise_scale);
  std::vector<bool> gen = generation_mask(cfg, seq_len);
  HaltConfig halt = cfg.halt.resolved(cfg.n_steps);

  NoisyState state = init_state(cfg, &prompt, model.table, schedule);
  GenerationTrace trace;
  trace.meta.run_id = "gen-" + std::to_string(cfg.seed);
  trace.meta.seed = cfg.seed;
  trace.meta.checkpoint = checkpoint_id;
  trace.meta.gen_mask = gen;
  trace.meta.config = cfg.to_json();

  CriterionState cstate;
  GenResult res;
  TokenSeq tokens;
  for (int s = 0; s <= cfg.n_steps; ++s) {
    state.t = schedule.grid[std::size_t(s)];
    TokenDistribution dist;
    try {
      dist = denoise(model.net, state);
    } catch (const std::exception& e) {
      throw std::runtime_error("generation step " + std::to_string(s) + ": " + e.what());
    }
    DenoisedEstimate est = interpolate_x0(dist, model.table);
    tokens = argmax_tokens(dist);

    StepRecord rec;
    rec.step = s;
    rec.t = state.t;
    rec.entropy_mean = entropy_stat(dist, gen);
    if (cstate.prev_probs) rec.kl_mean = kl_stat(dist.probs, *cstate.prev_probs, gen);
    if (cstate.prev_tokens) rec.token_switches = token_switches(tokens, *cstate.prev_tokens, gen);
    rec.l2_X = detail::mean_row_norm(state.X, gen);
    rec.l2_X0hat = detail::mean_row_norm(est.X0_hat, gen);
    rec.tokens = tokens;
    if (cfg.record == TraceVerbosity::StatsStates) {
      rec.X_snapshot = state.X;
      rec.X0_snapshot = est.X0_hat;
    }
    record_step(trace, std::move(rec));

    HaltDecision decision = step_criterion(halt, cstate, dist, tokens, gen);
    if (decision.halt || s == cfg.n_steps) {
      res.halt_step = s;
      res.halted_early = decision.halt && s < cfg.n_steps;
      break;
    }
    state = euler_step(state, est, schedule.grid[std::size_t(s) + 1]);
  }

  // conditioned positions echo the prompt
  for (int i = 0; i < seq_len; ++i)
    if (!gen[std::size_t(i)]) tokens[std::size_t(i)] = prompt[std::size_t(i)];
  res.tokens = std::move(tokens);
  res.trace = std::move(trace);
  return res;
}

/// Independent samples with seeds derived deterministically from
/// (base seed, prompt index, sample index); results ordered by index.
inline std::vector<GenResult> generate_batch(const DenoiserModel& model, const GenConfig& cfg,
                                             const std::vector<TokenSeq>& prompts,
                                             int n_samples_per_prompt, double t_max,
                                             const std::string& checkpoint_id = "") {
  int total = int(prompts.size()) * n_samples_per_prompt;
  std::vector<GenResult> results;
  results.resize(std::size_t(total));
  parallel_for(total, [&](int begin, int end, int) {
    for (int idx = begin; idx < end; ++idx) {
      int p = idx / n_samples_per_prompt, k = idx % n_samples_per_prompt;
      GenConfig sub = cfg;
      sub.seed = Rng::mix(Rng::mix(cfg.seed, std::uint64_t(p)), std::uint64_t(k));
      results[std::size_t(idx)] =
          generate(model, sub, prompts[std::size_t(p)], t_max, checkpoint_id);
    }
  });
  return results;
}

}  // namespace ddlm
