#pragma once

#include "ddlm/halting.hpp"
#include "ddlm/sampler.hpp"
#include "ddlm/training.hpp"
#include "ddlm/vocab.hpp"

#include <json.hpp>

namespace ddlm {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusSection {
  std::string path;
  TokenMode mode = TokenMode::Char;
  int max_vocab = 512;
};

struct MetricsSection {
  int samples_per_prompt = 5;
  std::string logprob_file;  // optional external scorer output
};

/// Merged run configuration: JSON object with sectioned keys. Unknown keys
/// are rejected with their full key path.
struct RunConfig {
  std::string run_dir = "run";
  std::uint64_t seed = 0;
  CorpusSection corpus;
  TrainConfig train;
  bool train_ar = false;  // also train the causal reference model
  GenConfig gen;
  MetricsSection metrics;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& section,
                           std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok)
      throw ConfigError("unknown config key: " +
                        (section.empty() ? it.key() : section + "." + it.key()));
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void maybe_str(const nlohmann::json& j, const char* key,
                      const std::function<void(const std::string&)>& apply) {
  if (j.contains(key)) apply(j.at(key).get<std::string>());
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["run_dir"] = c.run_dir;
  j["seed"] = c.seed;
  j["train_ar"] = c.train_ar;
  j["corpus"] = {{"path", c.corpus.path},
                 {"mode", to_string(c.corpus.mode)},
                 {"max_vocab", c.corpus.max_vocab}};
  j["train"] = {{"d", c.train.d},
                {"d_model", c.train.d_model},
                {"n_heads", c.train.n_heads},
                {"n_layers", c.train.n_layers},
                {"seq_len", c.train.seq_len},
                {"t_max", c.train.t_max},
                {"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"warmup_steps", c.train.warmup_steps},
                {"grad_clip", c.train.grad_clip},
                {"time_warping", c.train.time_warping},
                {"warp_ema_rate", c.train.warp_ema_rate},
                {"warp_bins", c.train.warp_bins},
                {"checkpoint_every", c.train.checkpoint_every},
                {"mask",
                 {{"strategy", to_string(c.train.mask_spec.strategy)},
                  {"mlm_rate", c.train.mask_spec.mlm_rate},
                  {"prefix_len_min", c.train.mask_spec.prefix_len_min},
                  {"prefix_len_max", c.train.mask_spec.prefix_len_max},
                  {"k_max", c.train.mask_spec.k_max},
                  {"span_noise_prob", c.train.mask_spec.span_noise_prob}}}};
  j["gen"] = {{"n_steps", c.gen.n_steps},
              {"noise_scale", c.gen.noise_scale},
              {"conditioning", to_string(c.gen.conditioning)},
              {"cond_tokens", c.gen.cond_tokens},
              {"record", c.gen.record == TraceVerbosity::StatsStates ? "stats+states" : "stats"},
              {"grid", c.gen.grid == GridKind::Geometric ? "geometric" : "linear"}};
  j["halt"] = {{"kind", to_string(c.gen.halt.kind)},
               {"e_t", c.gen.halt.e_t},
               {"patience_p", c.gen.halt.patience_p},
               {"switch_threshold", c.gen.halt.switch_threshold},
               {"d_t", c.gen.halt.d_t},
               {"min_steps", c.gen.halt.min_steps},
               {"fixed_step", c.gen.halt.fixed_step},
               {"kl_halt_above", c.gen.halt.kl_halt_above}};
  j["metrics"] = {{"samples_per_prompt", c.metrics.samples_per_prompt},
                  {"logprob_file", c.metrics.logprob_file}};
  return j;
}

/// Parses a sectioned JSON config, starting from defaults; every key is
/// optional, unknown keys raise ConfigError with the full key path.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::maybe;
  using detail::maybe_str;
  using detail::reject_unknown;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown(j, "", {"run_dir", "seed", "train_ar", "corpus", "train", "gen", "halt", "metrics"});
  RunConfig c;
  try {
    maybe(j, "run_dir", c.run_dir);
    maybe(j, "seed", c.seed);
    maybe(j, "train_ar", c.train_ar);
    if (j.contains("corpus")) {
      const auto& s = j.at("corpus");
      reject_unknown(s, "corpus", {"path", "mode", "max_vocab"});
      maybe(s, "path", c.corpus.path);
      maybe_str(s, "mode", [&](const std::string& v) { c.corpus.mode = token_mode_from_string(v); });
      maybe(s, "max_vocab", c.corpus.max_vocab);
    }
    if (j.contains("train")) {
      const auto& s = j.at("train");
      reject_unknown(s, "train",
                     {"d", "d_model", "n_heads", "n_layers", "seq_len", "t_max", "steps",
                      "batch_size", "lr", "warmup_steps", "grad_clip", "time_warping",
                      "warp_ema_rate", "warp_bins", "checkpoint_every", "mask"});
      maybe(s, "d", c.train.d);
      maybe(s, "d_model", c.train.d_model);
      maybe(s, "n_heads", c.train.n_heads);
      maybe(s, "n_layers", c.train.n_layers);
      maybe(s, "seq_len", c.train.seq_len);
      maybe(s, "t_max", c.train.t_max);
      maybe(s, "steps", c.train.steps);
      maybe(s, "batch_size", c.train.batch_size);
      maybe(s, "lr", c.train.lr);
      maybe(s, "warmup_steps", c.train.warmup_steps);
      maybe(s, "grad_clip", c.train.grad_clip);
      maybe(s, "time_warping", c.train.time_warping);
      maybe(s, "warp_ema_rate", c.train.warp_ema_rate);
      maybe(s, "warp_bins", c.train.warp_bins);
      maybe(s, "checkpoint_every", c.train.checkpoint_every);
      if (s.contains("mask")) {
        const auto& m = s.at("mask");
        reject_unknown(m, "train.mask",
                       {"strategy", "mlm_rate", "prefix_len_min", "prefix_len_max", "k_max",
                        "span_noise_prob"});
        maybe_str(m, "strategy", [&](const std::string& v) {
          c.train.mask_spec.strategy = mask_strategy_from_string(v);
        });
        maybe(m, "mlm_rate", c.train.mask_spec.mlm_rate);
        maybe(m, "prefix_len_min", c.train.mask_spec.prefix_len_min);
        maybe(m, "prefix_len_max", c.train.mask_spec.prefix_len_max);
        maybe(m, "k_max", c.train.mask_spec.k_max);
        maybe(m, "span_noise_prob", c.train.mask_spec.span_noise_prob);
      }
    }
    if (j.contains("gen")) {
      const auto& s = j.at("gen");
      reject_unknown(s, "gen",
                     {"n_steps", "noise_scale", "conditioning", "cond_tokens", "record", "grid"});
      maybe(s, "n_steps", c.gen.n_steps);
      maybe(s, "noise_scale", c.gen.noise_scale);
      maybe_str(s, "conditioning",
                [&](const std::string& v) { c.gen.conditioning = conditioning_from_string(v); });
      maybe(s, "cond_tokens", c.gen.cond_tokens);
      maybe_str(s, "record", [&](const std::string& v) {
        if (v == "stats")
          c.gen.record = TraceVerbosity::Stats;
        else if (v == "stats+states")
          c.gen.record = TraceVerbosity::StatsStates;
        else
          throw ConfigError("gen.record must be 'stats' or 'stats+states'");
      });
      maybe_str(s, "grid", [&](const std::string& v) {
        if (v == "linear")
          c.gen.grid = GridKind::Linear;
        else if (v == "geometric")
          c.gen.grid = GridKind::Geometric;
        else
          throw ConfigError("gen.grid must be 'linear' or 'geometric'");
      });
    }
    if (j.contains("halt")) {
      const auto& s = j.at("halt");
      reject_unknown(s, "halt",
                     {"kind", "e_t", "patience_p", "switch_threshold", "d_t", "min_steps",
                      "fixed_step", "kl_halt_above"});
      maybe_str(s, "kind",
                [&](const std::string& v) { c.gen.halt.kind = halt_kind_from_string(v); });
      maybe(s, "e_t", c.gen.halt.e_t);
      maybe(s, "patience_p", c.gen.halt.patience_p);
      maybe(s, "switch_threshold", c.gen.halt.switch_threshold);
      maybe(s, "d_t", c.gen.halt.d_t);
      maybe(s, "min_steps", c.gen.halt.min_steps);
      maybe(s, "fixed_step", c.gen.halt.fixed_step);
      maybe(s, "kl_halt_above", c.gen.halt.kl_halt_above);
    }
    if (j.contains("metrics")) {
      const auto& s = j.at("metrics");
      reject_unknown(s, "metrics", {"samples_per_prompt", "logprob_file"});
      maybe(s, "samples_per_prompt", c.metrics.samples_per_prompt);
      maybe(s, "logprob_file", c.metrics.logprob_file);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.train.seed = c.seed;
  c.gen.seed = c.seed;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw ConfigError("cannot parse config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_json(a) == to_json(b);
}

}  // namespace ddlm
