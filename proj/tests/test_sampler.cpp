#include "ddlm/sampler.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace ddlm;

namespace {

NetConfig tiny_net_config() {
  NetConfig cfg;
  cfg.vocab = 9;
  cfg.d_in = 6;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.seq_len = 8;
  cfg.causal = false;
  return cfg;
}

DenoiserModel tiny_model(std::uint64_t seed = 3) {
  Rng rng(seed);
  DenoiserModel m;
  m.net = init_net(tiny_net_config(), rng);
  m.table = random_embedding_table(9, 6, rng);
  normalize_embeddings(m.table);
  return m;
}

const TokenSeq kPrompt{1, 2, 3, 4, 5, 6, 7, 8};

}  // namespace

TEST(GenerationMask, UnconditionalAllGenerated) {
  GenConfig cfg;
  auto m = generation_mask(cfg, 5);
  EXPECT_EQ(m, std::vector<bool>(5, true));
}

TEST(GenerationMask, PrefixPinsLeadingTokens) {
  GenConfig cfg;
  cfg.conditioning = Conditioning::Prefix;
  cfg.cond_tokens = 3;
  auto m = generation_mask(cfg, 6);
  EXPECT_EQ(m, (std::vector<bool>{false, false, false, true, true, true}));
}

TEST(GenerationMask, EnclosedSplitsHeadAndTail) {
  GenConfig cfg;
  cfg.conditioning = Conditioning::Enclosed;
  cfg.cond_tokens = 32;
  auto m = generation_mask(cfg, 64);
  for (int i = 0; i < 16; ++i) EXPECT_FALSE(m[std::size_t(i)]);
  for (int i = 16; i < 48; ++i) EXPECT_TRUE(m[std::size_t(i)]);
  for (int i = 48; i < 64; ++i) EXPECT_FALSE(m[std::size_t(i)]);
}

TEST(GenerationMask, EnclosedOddCountPutsExtraAtTail) {
  GenConfig cfg;
  cfg.conditioning = Conditioning::Enclosed;
  cfg.cond_tokens = 5;
  auto m = generation_mask(cfg, 8);
  EXPECT_EQ(m, (std::vector<bool>{false, false, true, true, true, false, false, false}));
}

TEST(InitState, NoiseScaleZeroStartsAtOrigin) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.noise_scale = 0.0;
  NoiseSchedule sched = make_grid(10.0, 0.1, 4, GridKind::Linear, cfg.noise_scale);
  cfg.seed = 1;
  NoisyState a = init_state(cfg, &kPrompt, model.table, sched);
  cfg.seed = 999;
  NoisyState b = init_state(cfg, &kPrompt, model.table, sched);
  EXPECT_EQ(a.X.norm(), 0.0);
  EXPECT_EQ(a.X, b.X);  // no randomness left at scale 0
}

TEST(InitState, ConditionedRowsHoldPromptEmbeddings) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.conditioning = Conditioning::Prefix;
  cfg.cond_tokens = 4;
  NoiseSchedule sched = make_grid(10.0, 0.1, 4, GridKind::Linear, cfg.noise_scale);
  NoisyState st = init_state(cfg, &kPrompt, model.table, sched);
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(st.cond_mask[std::size_t(i)]);
    EXPECT_EQ(st.X.row(i), model.table.matrix.row(kPrompt[std::size_t(i)]));
  }
  for (int i = 4; i < 8; ++i) EXPECT_FALSE(st.cond_mask[std::size_t(i)]);
}

TEST(Generate, SameSeedBitwiseReproducible) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 6;
  cfg.seed = 77;
  cfg.record = TraceVerbosity::StatsStates;
  GenResult a = generate(model, cfg, kPrompt, 10.0);
  GenResult b = generate(model, cfg, kPrompt, 10.0);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(trace_to_jsonl(a.trace), trace_to_jsonl(b.trace));
}

TEST(Generate, NoHaltRunsAllStepsInclusive) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 6;
  GenResult r = generate(model, cfg, kPrompt, 10.0);
  EXPECT_EQ(r.halt_step, 6);
  EXPECT_FALSE(r.halted_early);
  ASSERT_EQ(r.trace.records.size(), 7u);  // steps 0..n_steps inclusive
  EXPECT_EQ(r.trace.records.front().step, 0);
  EXPECT_FALSE(r.trace.records.front().kl_mean.has_value());
  EXPECT_FALSE(r.trace.records.front().token_switches.has_value());
  EXPECT_TRUE(r.trace.records[1].kl_mean.has_value());
  EXPECT_TRUE(r.trace.records[1].token_switches.has_value());
  EXPECT_DOUBLE_EQ(r.trace.records.back().t, 0.1);
}

TEST(Generate, FixedStepZeroHaltsImmediately) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 6;
  cfg.halt.kind = HaltKind::Fixed;
  cfg.halt.fixed_step = 0;
  GenResult r = generate(model, cfg, kPrompt, 10.0);
  EXPECT_EQ(r.halt_step, 0);
  EXPECT_TRUE(r.halted_early);
  EXPECT_EQ(r.trace.records.size(), 1u);
}

TEST(Generate, FixedStepMidway) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 6;
  cfg.halt.kind = HaltKind::Fixed;
  cfg.halt.fixed_step = 3;
  GenResult r = generate(model, cfg, kPrompt, 10.0);
  EXPECT_EQ(r.halt_step, 3);
  EXPECT_TRUE(r.halted_early);
  EXPECT_EQ(r.trace.records.size(), 4u);
}

TEST(Generate, ConditionedPositionsEchoPromptEverywhere) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 5;
  cfg.conditioning = Conditioning::Enclosed;
  cfg.cond_tokens = 4;
  cfg.record = TraceVerbosity::StatsStates;
  GenResult r = generate(model, cfg, kPrompt, 10.0);
  // output tokens echo the prompt at conditioned positions
  for (std::size_t i : {0u, 1u, 6u, 7u}) EXPECT_EQ(r.tokens[i], kPrompt[i]);
  // conditioned embedding rows are carried bit-exactly through every step
  for (const auto& rec : r.trace.records)
    for (Eigen::Index i : {0, 1, 6, 7})
      ASSERT_EQ(rec.X_snapshot->row(i), model.table.matrix.row(kPrompt[std::size_t(i)]))
          << "step " << rec.step;
}

TEST(Generate, PromptLengthMustMatchSeqLen) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  EXPECT_THROW(generate(model, cfg, TokenSeq{1, 2, 3}, 10.0), std::invalid_argument);
}

TEST(Generate, TraceMetaIsPopulated) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 3;
  cfg.seed = 12;
  GenResult r = generate(model, cfg, kPrompt, 10.0, "ckpt-xyz");
  EXPECT_EQ(r.trace.meta.run_id, "gen-12");
  EXPECT_EQ(r.trace.meta.seed, 12u);
  EXPECT_EQ(r.trace.meta.checkpoint, "ckpt-xyz");
  EXPECT_EQ(r.trace.meta.gen_mask.size(), 8u);
  EXPECT_EQ(r.trace.meta.config.at("n_steps"), 3);
}

TEST(GenerateBatch, DistinctSeedsAndRerunIdentical) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 4;
  cfg.seed = 5;
  std::vector<TokenSeq> prompts{kPrompt};
  auto a = generate_batch(model, cfg, prompts, 5, 10.0);
  auto b = generate_batch(model, cfg, prompts, 5, 10.0);
  ASSERT_EQ(a.size(), 5u);
  std::set<std::uint64_t> seeds;
  for (std::size_t k = 0; k < a.size(); ++k) {
    seeds.insert(a[k].trace.meta.seed);
    EXPECT_EQ(a[k].tokens, b[k].tokens);
    EXPECT_EQ(trace_to_jsonl(a[k].trace), trace_to_jsonl(b[k].trace));
  }
  EXPECT_EQ(seeds.size(), 5u);
}

TEST(GenerateBatch, NoiseScaleZeroCollapsesSamples) {
  DenoiserModel model = tiny_model();
  GenConfig cfg;
  cfg.n_steps = 4;
  cfg.noise_scale = 0.0;
  auto res = generate_batch(model, cfg, {kPrompt}, 3, 10.0);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_EQ(res[0].tokens, res[1].tokens);
  EXPECT_EQ(res[1].tokens, res[2].tokens);
}

TEST(Generate, LiveHaltMatchesReplayOnOwnTrace) {
  DenoiserModel model = tiny_model();
  for (HaltKind kind : {HaltKind::Entropy, HaltKind::KL, HaltKind::Patience, HaltKind::Fixed}) {
    GenConfig cfg;
    cfg.n_steps = 8;
    cfg.seed = 31;
    cfg.halt.kind = kind;
    cfg.halt.e_t = 2.0;
    cfg.halt.d_t = 0.5;
    cfg.halt.patience_p = 2;
    cfg.halt.switch_threshold = 8;  // always calm -> exercises the counter
    cfg.halt.fixed_step = 5;
    GenResult r = generate(model, cfg, kPrompt, 10.0);
    auto replayed = replay(r.trace, cfg.halt.resolved(cfg.n_steps));
    if (r.halted_early) {
      ASSERT_TRUE(replayed.has_value()) << to_string(kind);
      EXPECT_EQ(*replayed, r.halt_step) << to_string(kind);
    } else if (replayed) {
      EXPECT_EQ(*replayed, cfg.n_steps) << to_string(kind);
    }
  }
}
