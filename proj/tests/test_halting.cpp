#include "ddlm/halting.hpp"
#include "ddlm/sampler.hpp"

#include <gtest/gtest.h>

using namespace ddlm;

namespace {

TokenDistribution dist_from_probs(Mat p) {
  TokenDistribution d;
  d.logits = p.array().max(1e-300).log().matrix();
  d.probs = std::move(p);
  return d;
}

std::vector<bool> all_gen(int n) { return std::vector<bool>(std::size_t(n), true); }

/// Synthetic stats-only trace from per-step (entropy, kl, switches).
GenerationTrace stats_trace(const std::vector<double>& entropy, const std::vector<double>& kl,
                            const std::vector<int>& switches) {
  GenerationTrace tr;
  for (std::size_t s = 0; s < entropy.size(); ++s) {
    StepRecord r;
    r.step = int(s);
    r.t = 10.0 - double(s);
    r.entropy_mean = entropy[s];
    if (s > 0) {
      r.kl_mean = kl[s];
      r.token_switches = switches[s];
    }
    record_step(tr, std::move(r));
  }
  return tr;
}

}  // namespace

// ---- statistics ----

TEST(EntropyStat, UniformAndOneHot) {
  Mat p(2, 4);
  p.row(0) = Mat::Constant(1, 4, 0.25);
  p.row(1) << 1.0, 0.0, 0.0, 0.0;  // one-hot: 0*ln0 counts as 0
  TokenDistribution d = dist_from_probs(p);
  EXPECT_NEAR(entropy_stat(d, all_gen(2)), 0.5 * std::log(4.0), 1e-12);
  EXPECT_NEAR(entropy_stat(d, {false, true}), 0.0, 1e-12);
}

TEST(EntropyStat, HalfHalfRow) {
  Mat p(1, 4);
  p << 0.5, 0.5, 0.0, 0.0;
  EXPECT_NEAR(entropy_stat(dist_from_probs(p), all_gen(1)), std::log(2.0), 1e-12);
}

TEST(EntropyStat, MaskErrors) {
  Mat p = Mat::Constant(2, 4, 0.25);
  TokenDistribution d = dist_from_probs(p);
  EXPECT_THROW(entropy_stat(d, all_gen(3)), std::invalid_argument);
  EXPECT_THROW(entropy_stat(d, {false, false}), std::invalid_argument);
}

TEST(KlStat, HandValue) {
  // cur=(0.5,0.5), prev=(0.25,0.75): KL = 0.5 ln2 + 0.5 ln(2/3)
  Mat cur(1, 2), prev(1, 2);
  cur << 0.5, 0.5;
  prev << 0.25, 0.75;
  double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  EXPECT_NEAR(kl_stat(cur, prev, all_gen(1)), expect, 1e-12);
  EXPECT_NEAR(expect, 0.1438, 5e-4);
}

TEST(KlStat, IdenticalIsZeroAndNeverNegative) {
  Mat p(2, 5);
  p.setRandom();
  p = p.array().abs();
  for (int i = 0; i < 2; ++i) p.row(i) /= p.row(i).sum();
  EXPECT_EQ(kl_stat(p, p, all_gen(2)), 0.0);
  Mat q = p;
  q.row(0).reverseInPlace();
  EXPECT_GE(kl_stat(p, q, all_gen(2)), 0.0);
}

TEST(KlStat, OneHotAgreementIsZero) {
  Mat cur(1, 3), prev(1, 3);
  cur << 0.0, 1.0, 0.0;
  prev << 0.0, 1.0, 0.0;
  EXPECT_EQ(kl_stat(cur, prev, all_gen(1)), 0.0);
}

TEST(TokenSwitches, CountsOnlyGeneratedPositions) {
  EXPECT_EQ(token_switches({1, 2, 3, 4}, {1, 5, 3, 6}, all_gen(4)), 2);
  EXPECT_EQ(token_switches({1, 2, 3, 4}, {1, 5, 3, 6}, {true, false, true, false}), 0);
  EXPECT_THROW(token_switches({1, 2}, {1}, all_gen(2)), std::invalid_argument);
}

// ---- criterion algorithms via replay ----

TEST(Replay, EntropyFirstStepAtOrBelowThreshold) {
  GenerationTrace tr = stats_trace({3.0, 2.0, 1.4, 0.9, 0.4}, {0, 1, 1, 1, 1}, {0, 1, 1, 1, 1});
  HaltConfig cfg;
  cfg.kind = HaltKind::Entropy;
  cfg.e_t = 1.5;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(2));
  cfg.e_t = 0.0;  // never reached
  EXPECT_EQ(replay(tr, cfg), std::nullopt);
  cfg.e_t = 1.5;
  cfg.min_steps = 4;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(4));
}

TEST(Replay, KlRespectsMinStepsGate) {
  // KL tiny from the start; min_steps must delay the halt.
  GenerationTrace tr =
      stats_trace({3, 3, 3, 3, 3, 3, 3, 3}, {0, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6},
                  {0, 0, 0, 0, 0, 0, 0, 0});
  HaltConfig cfg;
  cfg.kind = HaltKind::KL;
  cfg.d_t = 1e-3;
  HaltConfig resolved = cfg.resolved(100);
  EXPECT_EQ(resolved.min_steps, 25);  // round(0.25 * N_max)
  resolved = cfg.resolved(7);
  EXPECT_EQ(resolved.min_steps, 2);
  EXPECT_EQ(replay(tr, resolved), std::optional<int>(2));
}

TEST(Replay, KlHaltAboveFlipsComparison) {
  GenerationTrace tr = stats_trace({3, 3, 3, 3}, {0, 0.1, 0.9, 0.1}, {0, 0, 0, 0});
  HaltConfig cfg;
  cfg.kind = HaltKind::KL;
  cfg.d_t = 0.5;
  cfg.min_steps = 1;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(1));
  cfg.kl_halt_above = true;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(2));
}

TEST(Replay, PatienceHaltsAfterConsecutiveCalmSteps) {
  // switches per step: -,5,0,0,0 -> third consecutive calm step is step 4
  GenerationTrace tr = stats_trace({3, 3, 3, 3, 3}, {0, 1, 1, 1, 1}, {0, 5, 0, 0, 0});
  HaltConfig cfg;
  cfg.kind = HaltKind::Patience;
  cfg.patience_p = 3;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(4));
  cfg.patience_p = 1;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(2));
}

TEST(Replay, PatienceCounterResetsOnActivity) {
  GenerationTrace tr =
      stats_trace({3, 3, 3, 3, 3, 3, 3}, {0, 1, 1, 1, 1, 1, 1}, {0, 0, 0, 4, 0, 0, 0});
  HaltConfig cfg;
  cfg.kind = HaltKind::Patience;
  cfg.patience_p = 3;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(6));
  cfg.switch_threshold = 4;  // 4 switches now count as calm
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(3));
}

TEST(Replay, PatienceMatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 5 + int(rng.uniform_int(20));
    std::vector<double> ent(std::size_t(n), 3.0), kl(std::size_t(n), 1.0);
    std::vector<int> sw(std::size_t(n), 0);
    for (int s = 1; s < n; ++s) sw[std::size_t(s)] = int(rng.uniform_int(4));
    HaltConfig cfg;
    cfg.kind = HaltKind::Patience;
    cfg.patience_p = 1 + int(rng.uniform_int(3));
    cfg.switch_threshold = int(rng.uniform_int(3));
    cfg.min_steps = int(rng.uniform_int(5));

    // brute-force oracle
    std::optional<int> expect;
    int run = 0;
    for (int s = 1; s < n && !expect; ++s) {
      run = sw[std::size_t(s)] <= cfg.switch_threshold ? run + 1 : 0;
      if (run >= cfg.patience_p && s >= cfg.min_steps) expect = s;
    }
    EXPECT_EQ(replay(stats_trace(ent, kl, sw), cfg), expect) << "trial " << trial;
  }
}

TEST(Replay, FixedStep) {
  GenerationTrace tr = stats_trace({3, 3, 3, 3}, {0, 1, 1, 1}, {0, 1, 1, 1});
  HaltConfig cfg;
  cfg.kind = HaltKind::Fixed;
  cfg.fixed_step = 2;
  EXPECT_EQ(replay(tr, cfg), std::optional<int>(2));
  cfg.fixed_step = 9;  // beyond the trace
  EXPECT_EQ(replay(tr, cfg), std::nullopt);
}

TEST(Replay, NoneNeverHalts) {
  GenerationTrace tr = stats_trace({0, 0, 0}, {0, 0, 0}, {0, 0, 0});
  HaltConfig cfg;
  EXPECT_EQ(replay(tr, cfg), std::nullopt);
}

TEST(Replay, MissingStatsAreErrors) {
  GenerationTrace tr;
  StepRecord r0;
  r0.step = 0;
  record_step(tr, r0);
  StepRecord r1;
  r1.step = 1;  // no kl_mean / token_switches recorded
  record_step(tr, r1);
  HaltConfig cfg;
  cfg.kind = HaltKind::KL;
  try {
    replay(tr, cfg);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("trace lacks kl_mean"), std::string::npos);
  }
  cfg.kind = HaltKind::Patience;
  try {
    replay(tr, cfg);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("trace lacks token_switches"), std::string::npos);
  }
}

// ---- sweep ----

TEST(Sweep, SingleTraceFixedThresholds) {
  GenerationTrace tr = stats_trace(std::vector<double>(11, 3.0), std::vector<double>(11, 1.0),
                                   std::vector<int>(11, 1));
  HaltConfig f1, f2;
  f1.kind = f2.kind = HaltKind::Fixed;
  f1.fixed_step = 4;
  f2.fixed_step = 100;  // never fires -> counted at final step
  auto rows = sweep({tr}, {f2, f1});  // also checks sorting by threshold
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].criterion, "fixed");
  EXPECT_EQ(rows[0].threshold, 4.0);
  EXPECT_EQ(rows[0].mean_halt_step, 4.0);
  EXPECT_EQ(rows[0].frac_halted, 1.0);
  EXPECT_EQ(rows[1].threshold, 100.0);
  EXPECT_EQ(rows[1].mean_halt_step, 10.0);
  EXPECT_EQ(rows[1].frac_halted, 0.0);
}

TEST(Sweep, TighterEntropyThresholdNeverHaltsEarlier) {
  // monotone decreasing entropy traces with varied shapes
  std::vector<GenerationTrace> traces;
  Rng rng(7);
  for (int k = 0; k < 8; ++k) {
    std::vector<double> ent;
    double e = 3.0 + rng.uniform();
    for (int s = 0; s < 30; ++s) {
      ent.push_back(e);
      e *= 0.75 + 0.2 * rng.uniform();
    }
    traces.push_back(stats_trace(ent, std::vector<double>(30, 1.0), std::vector<int>(30, 1)));
  }
  std::vector<HaltConfig> grid;
  for (double e_t : {2.0, 1.0, 0.5, 0.25, 0.1}) {
    HaltConfig c;
    c.kind = HaltKind::Entropy;
    c.e_t = e_t;
    grid.push_back(c);
  }
  auto rows = sweep(traces, grid);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i - 1].threshold, rows[i].threshold);
    // larger threshold (later row) halts no later than a smaller one
    EXPECT_GE(rows[i - 1].mean_halt_step, rows[i].mean_halt_step);
  }
}

TEST(Sweep, FullGridProducesOneRowPerConfig) {
  GenerationTrace tr = stats_trace(std::vector<double>(6, 1.0), std::vector<double>(6, 0.5),
                                   std::vector<int>(6, 0));
  std::vector<HaltConfig> grid;
  for (double e : {2.0, 1.5, 0.5}) {
    HaltConfig c;
    c.kind = HaltKind::Entropy;
    c.e_t = e;
    grid.push_back(c);
  }
  for (int p : {1, 2, 3, 4, 5}) {
    HaltConfig c;
    c.kind = HaltKind::Patience;
    c.patience_p = p;
    grid.push_back(c);
  }
  auto rows = sweep({tr}, grid);
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_THROW(sweep({}, grid), std::invalid_argument);
}

// ---- live vs replay on a real model ----

TEST(LiveVsReplay, IdenticalHaltStepAcrossSeedsAndCriteria) {
  NetConfig ncfg;
  ncfg.vocab = 9;
  ncfg.d_in = 6;
  ncfg.d_model = 16;
  ncfg.n_heads = 2;
  ncfg.n_layers = 1;
  ncfg.seq_len = 8;
  ncfg.causal = false;
  Rng rng(41);
  DenoiserModel model;
  model.net = init_net(ncfg, rng);
  model.table = random_embedding_table(9, 6, rng);
  normalize_embeddings(model.table);
  TokenSeq prompt{1, 2, 3, 4, 5, 6, 7, 8};

  std::vector<HaltConfig> configs;
  {
    HaltConfig c;
    c.kind = HaltKind::Entropy;
    c.e_t = 2.1;
    configs.push_back(c);
    c = HaltConfig{};
    c.kind = HaltKind::KL;
    c.d_t = 0.05;
    configs.push_back(c);
    c = HaltConfig{};
    c.kind = HaltKind::Patience;
    c.patience_p = 2;
    c.switch_threshold = 8;
    configs.push_back(c);
    c = HaltConfig{};
    c.kind = HaltKind::Fixed;
    c.fixed_step = 4;
    configs.push_back(c);
  }

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GenConfig base;
    base.n_steps = 10;
    base.seed = seed;
    GenResult full = generate(model, base, prompt, 10.0);  // unhalted trace

    for (const auto& hc : configs) {
      GenConfig live = base;
      live.halt = hc;
      GenResult r = generate(model, live, prompt, 10.0);
      auto replayed = replay(full.trace, hc.resolved(base.n_steps));
      int expect = replayed ? *replayed : base.n_steps;
      EXPECT_EQ(r.halt_step, expect) << to_string(hc.kind) << " seed " << seed;
    }
  }
}
