#include "ddlm/metrics.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace ddlm;

namespace {

SampleSet set_of(std::vector<TokenSeq> samples) {
  SampleSet s;
  s.samples = std::move(samples);
  return s;
}

}  // namespace

// ---- dist-n ----

TEST(DistN, IdenticalSamplesPoolTheDenominator) {
  // 5 copies of a 4-token sample: 4 distinct unigrams / 20 occurrences
  SampleSet s = set_of(std::vector<TokenSeq>(5, TokenSeq{1, 2, 3, 4}));
  EXPECT_NEAR(dist_n(s, 1), 4.0 / 20.0, 1e-12);
  EXPECT_NEAR(dist_n(s, 2), 3.0 / 15.0, 1e-12);
  EXPECT_NEAR(dist_n(s, 3), 2.0 / 10.0, 1e-12);
}

TEST(DistN, DisjointSamplesGiveOne) {
  SampleSet s = set_of({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_EQ(dist_n(s, 1), 1.0);
  EXPECT_EQ(dist_n(s, 2), 1.0);
}

TEST(DistN, SingleRepeatedTokenIsMinimal) {
  SampleSet s = set_of({{7, 7, 7, 7}, {7, 7, 7, 7}});
  EXPECT_NEAR(dist_n(s, 1), 1.0 / 8.0, 1e-12);
}

TEST(DistN, OrderOfSamplesIrrelevant) {
  SampleSet a = set_of({{1, 2}, {3, 4}, {1, 4}});
  SampleSet b = set_of({{1, 4}, {1, 2}, {3, 4}});
  for (int n = 1; n <= 2; ++n) EXPECT_EQ(dist_n(a, n), dist_n(b, n));
}

TEST(DistN, ErrorsOnBadArguments) {
  SampleSet s = set_of({{1, 2}});
  EXPECT_THROW(dist_n(s, 0), std::invalid_argument);
  EXPECT_THROW(dist_n(s, 4), std::invalid_argument);
  EXPECT_THROW(dist_n(s, 3), std::invalid_argument);  // samples shorter than n
}

// ---- self-BLEU ----

TEST(SelfBleu, IdenticalSamplesGiveExactlyOne) {
  SampleSet s = set_of(std::vector<TokenSeq>(3, TokenSeq{1, 2, 3, 4, 5}));
  EXPECT_EQ(self_bleu(s), 1.0);
}

TEST(SelfBleu, HandGoldenOneTokenDifference) {
  // precisions 3/4, 2/3, 1/2, smoothed 1/2 -> (0.125)^(1/4)
  SampleSet s = set_of({{1, 2, 3, 4}, {1, 2, 3, 5}});
  EXPECT_NEAR(self_bleu(s), 0.5946035575013605, 1e-12);
}

TEST(SelfBleu, DisjointSamplesNearSmoothingFloor) {
  SampleSet s = set_of({{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}});
  // all precisions smoothed: (1/6 * 1/5 * 1/4 * 1/3)^(1/4)
  EXPECT_NEAR(self_bleu(s), std::pow(1.0 / 360.0, 0.25), 1e-12);
}

TEST(SelfBleu, BrevityPenaltyAppliesToShortCandidates) {
  // short candidate is a prefix of the long reference
  SampleSet s = set_of({{1, 2, 3, 4, 5, 6, 7, 8}, {1, 2, 3, 4}});
  double bleu_short_vs_long = self_bleu(s);
  SampleSet eq = set_of({{1, 2, 3, 4, 5, 6, 7, 8}, {1, 2, 3, 4, 5, 6, 7, 8}});
  EXPECT_LT(bleu_short_vs_long, self_bleu(eq));
}

TEST(SelfBleu, NeedsAtLeastTwoSamples) {
  EXPECT_THROW(self_bleu(set_of({{1, 2, 3}})), std::invalid_argument);
}

// ---- Zipf coefficient ----

TEST(Zipf, UniformCountsGiveZero) {
  EXPECT_NEAR(zipf_from_counts({5, 5, 5, 5, 5, 5}), 0.0, 1e-12);
}

TEST(Zipf, InverseRankGivesOne) {
  std::vector<double> counts;
  for (int r = 1; r <= 50; ++r) counts.push_back(1000.0 / double(r));
  EXPECT_NEAR(zipf_from_counts(counts), 1.0, 1e-9);
}

TEST(Zipf, InverseSquareGivesTwo) {
  std::vector<double> counts;
  for (int r = 1; r <= 50; ++r) counts.push_back(1e6 / double(r * r));
  EXPECT_NEAR(zipf_from_counts(counts), 2.0, 1e-9);
}

TEST(Zipf, RecoversPlantedExponentFromRoundedCounts) {
  for (double s : {0.5, 1.0, 2.0}) {
    std::vector<double> counts;
    for (int r = 1; r <= 100; ++r) counts.push_back(std::round(1e9 * std::pow(double(r), -s)));
    EXPECT_NEAR(zipf_from_counts(counts), s, 1e-3) << "exponent " << s;
  }
}

TEST(Zipf, InputOrderIrrelevantAndZerosDropped) {
  EXPECT_EQ(zipf_from_counts({1, 8, 4, 2}), zipf_from_counts({8, 4, 2, 1, 0.0, 0.0}));
}

TEST(Zipf, DegenerateDistributionThrows) {
  try {
    zipf_from_counts({42.0});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate frequency distribution"), std::string::npos);
  }
  EXPECT_THROW(zipf_from_counts({0.0, 0.0}), std::invalid_argument);
}

TEST(Zipf, PooledCoefficientMatchesManualCounts) {
  // pooled token frequencies: 1 -> 4, 2 -> 2, 3 -> 1
  std::vector<TokenSeq> samples{{1, 1, 2}, {1, 1, 2, 3}};
  EXPECT_EQ(zipf_coeff(samples), zipf_from_counts({4, 2, 1}));
}

// ---- WER ----

TEST(Wer, IdenticalIsZero) {
  EXPECT_EQ(wer({1, 2, 3}, {1, 2, 3}), 0.0);
}

TEST(Wer, OneSubstitutionOfThree) {
  EXPECT_NEAR(wer({1, 9, 3}, {1, 2, 3}), 1.0 / 3.0, 1e-12);
}

TEST(Wer, InsertionsAndDeletions) {
  EXPECT_NEAR(wer({1, 2, 3, 4}, {1, 2, 3}), 1.0 / 3.0, 1e-12);  // one insertion
  EXPECT_NEAR(wer({1, 3}, {1, 2, 3}), 1.0 / 3.0, 1e-12);        // one deletion
  EXPECT_EQ(wer({}, {1, 2}), 1.0);                               // empty hypothesis
  EXPECT_THROW(wer({1}, {}), std::invalid_argument);
}

TEST(Wer, MatchesRecursiveOracleOnRandomCases) {
  std::function<std::size_t(const TokenSeq&, const TokenSeq&, std::size_t, std::size_t)> lev =
      [&](const TokenSeq& a, const TokenSeq& b, std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    std::size_t sub = lev(a, b, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
    return std::min({sub, lev(a, b, i - 1, j) + 1, lev(a, b, i, j - 1) + 1});
  };
  Rng rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    TokenSeq a(1 + rng.uniform_int(6)), b(1 + rng.uniform_int(6));
    for (auto& t : a) t = int(rng.uniform_int(3));
    for (auto& t : b) t = int(rng.uniform_int(3));
    double expect = double(lev(a, b, a.size(), b.size())) / double(b.size());
    EXPECT_EQ(wer(a, b), expect) << "trial " << trial;
  }
}

// ---- unique token fraction ----

TEST(UniqueTokenFraction, Extremes) {
  EXPECT_EQ(unique_token_fraction({1, 2, 3, 4}), 1.0);
  EXPECT_EQ(unique_token_fraction({7, 7, 7, 7, 7, 7, 7, 7}), 1.0 / 8.0);
  EXPECT_EQ(unique_token_fraction({1, 2, 1, 3}), 3.0 / 4.0);
  EXPECT_THROW(unique_token_fraction({}), std::invalid_argument);
}

// ---- external log-probability files ----

TEST(LogprobFile, ReadAndScore) {
  std::string path = testing::TempDir() + "/lp.jsonl";
  atomic_write_file(path,
                    "{\"tokens\":[1,2,3],\"logprobs\":[-1.0,-2.0,-3.0]}\n"
                    "{\"tokens\":[4,5],\"logprobs\":[-0.5,-0.5]}\n");
  auto recs = read_logprob_file(path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_NEAR(ar_nll_from_file(recs, {1, 2, 3}), 2.0, 1e-12);
  EXPECT_NEAR(ar_nll_from_file(recs, {4, 5}), 0.5, 1e-12);
  EXPECT_THROW(ar_nll_from_file(recs, {9, 9}), std::runtime_error);
}

TEST(LogprobFile, LengthMismatchNamesLine) {
  std::string path = testing::TempDir() + "/lp_bad.jsonl";
  atomic_write_file(path,
                    "{\"tokens\":[1],\"logprobs\":[-1.0]}\n"
                    "{\"tokens\":[1,2],\"logprobs\":[-1.0]}\n");
  try {
    read_logprob_file(path);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(MeanNll, SimpleAverage) {
  EXPECT_NEAR(mean_nll({-1.0, -3.0}), 2.0, 1e-12);
  EXPECT_THROW(mean_nll({}), std::invalid_argument);
}

// ---- batch evaluation ----

TEST(Evaluate, MacroIsMeanOfRows) {
  std::vector<SampleSet> sets{set_of({{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}}),
                              set_of({{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}})};
  EvalResult res = evaluate(sets);
  ASSERT_EQ(res.rows.size(), 2u);
  ASSERT_TRUE(res.macro.dist_1 && res.rows[0].dist_1 && res.rows[1].dist_1);
  EXPECT_NEAR(*res.macro.dist_1, 0.5 * (*res.rows[0].dist_1 + *res.rows[1].dist_1), 1e-12);
  ASSERT_TRUE(res.macro.self_bleu);
  EXPECT_NEAR(*res.macro.self_bleu, 0.5 * (*res.rows[0].self_bleu + *res.rows[1].self_bleu), 1e-12);
  EXPECT_TRUE(res.pooled_zipf.has_value());
}

TEST(Evaluate, DiversityMetricsSkippedForSingleSample) {
  EvalResult res = evaluate({set_of({{1, 2, 3}})});
  EXPECT_FALSE(res.rows[0].dist_1.has_value());
  EXPECT_FALSE(res.rows[0].self_bleu.has_value());
  EXPECT_TRUE(res.rows[0].unique_token_fraction.has_value());
  EXPECT_FALSE(res.macro.dist_1.has_value());
  EXPECT_THROW(evaluate({set_of({})}), std::invalid_argument);
}

TEST(Evaluate, ExternalLogprobsMatchInRepoArNll) {
  NetConfig cfg;
  cfg.vocab = 7;
  cfg.d_in = 5;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.seq_len = 8;
  Rng rng(23);
  ARModel model = init_ar_model(cfg, rng);
  TokenSeq tokens{1, 4, 2, 6, 3, 5};

  // per-token logprobs computed the same way an external scorer would:
  // position j scored from logits row j-1.
  TokenSeq full = tokens;
  full.resize(8, 0);
  detail::NetCache cache;
  Mat logits = net_forward(model.net, ar_input_rows(model, full), ARModel::kFixedTime, cache);
  std::vector<double> lps(tokens.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 1; j < tokens.size(); ++j) {
    const auto row = logits.row(Eigen::Index(j - 1));
    double mx = row.maxCoeff();
    double lse = std::log((row.array() - mx).exp().sum()) + mx;
    lps[j] = row(tokens[j]) - lse;
    sum += lps[j];
  }
  lps[0] = sum / double(tokens.size() - 1);  // keeps the mean equal to the skipped-first mean

  nlohmann::json j{{"tokens", tokens}, {"logprobs", lps}};
  std::string path = testing::TempDir() + "/lp_model.jsonl";
  atomic_write_file(path, j.dump() + "\n");

  std::vector<SampleSet> sets{set_of({tokens, tokens})};
  EvalOptions with_model;
  with_model.ar_model = &model;
  auto recs = read_logprob_file(path);
  EvalOptions with_file;
  with_file.logprobs = &recs;

  EvalResult a = evaluate(sets, with_model);
  EvalResult b = evaluate(sets, with_file);
  ASSERT_TRUE(a.macro.ar_nll && b.macro.ar_nll);
  EXPECT_NEAR(*a.macro.ar_nll, *b.macro.ar_nll, 1e-9);
  EXPECT_NEAR(*a.macro.ar_nll, ar_nll(model, {}, tokens), 1e-12);
}
