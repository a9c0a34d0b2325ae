#pragma once

#include "ddlm/ar_model.hpp"
#include "ddlm/vocab.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <set>

namespace ddlm {

/// Samples from one prompt (default 5), evaluated jointly for diversity.
struct SampleSet {
  TokenSeq prompt;
  std::vector<TokenSeq> samples;
};

struct MetricReport {
  std::optional<double> ar_nll;
  std::optional<double> dist_1, dist_2, dist_3;
  std::optional<double> self_bleu;
  std::optional<double> zipf;
  std::optional<double> unique_token_fraction;
};

namespace detail {

using Ngram = std::vector<int>;

inline std::map<Ngram, int> ngram_counts(const TokenSeq& seq, int n) {
  std::map<Ngram, int> counts;
  if (int(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + std::size_t(n) <= seq.size(); ++i)
    ++counts[Ngram(seq.begin() + long(i), seq.begin() + long(i) + n)];
  return counts;
}

}  // namespace detail

/// Distinct n-grams pooled over all samples / total n-gram occurrences.
inline double dist_n(const SampleSet& set, int n) {
  if (n < 1 || n > 3) throw std::invalid_argument("dist_n supports n in 1..3");
  std::set<detail::Ngram> distinct;
  std::int64_t total = 0;
  for (const auto& s : set.samples) {
    for (auto& [g, c] : detail::ngram_counts(s, n)) {
      distinct.insert(g);
      total += c;
    }
  }
  if (total == 0) throw std::invalid_argument("dist_n: samples shorter than n");
  return double(distinct.size()) / double(total);
}

/// Mean over samples of BLEU(sample; remaining samples as references).
/// Uniform 1-4 gram weights, brevity penalty, add-one smoothing on zero
/// match counts. Identical samples give exactly 1.0.
inline double self_bleu(const SampleSet& set) {
  if (set.samples.size() < 2) throw std::invalid_argument("self_bleu needs >= 2 samples");
  double total = 0.0;
  for (std::size_t cand = 0; cand < set.samples.size(); ++cand) {
    const TokenSeq& hyp = set.samples[cand];
    double log_prec = 0.0;
    for (int n = 1; n <= 4; ++n) {
      auto hyp_counts = detail::ngram_counts(hyp, n);
      std::map<detail::Ngram, int> ref_max;
      for (std::size_t r = 0; r < set.samples.size(); ++r) {
        if (r == cand) continue;
        for (auto& [g, c] : detail::ngram_counts(set.samples[r], n))
          ref_max[g] = std::max(ref_max[g], c);
      }
      std::int64_t matched = 0, candidates = 0;
      for (auto& [g, c] : hyp_counts) {
        candidates += c;
        auto it = ref_max.find(g);
        if (it != ref_max.end()) matched += std::min(c, it->second);
      }
      double p;
      if (candidates == 0)
        p = 1.0;  // sequence shorter than n: no evidence either way
      else if (matched == 0)
        p = 1.0 / double(candidates + 1);  // add-one smoothing
      else
        p = double(matched) / double(candidates);
      log_prec += 0.25 * std::log(p);
    }
    // brevity penalty against the closest reference length
    std::int64_t hyp_len = std::int64_t(hyp.size());
    std::int64_t ref_len = hyp_len;
    std::int64_t best_diff = std::numeric_limits<std::int64_t>::max();
    for (std::size_t r = 0; r < set.samples.size(); ++r) {
      if (r == cand) continue;
      auto len = std::int64_t(set.samples[r].size());
      auto diff = std::abs(len - hyp_len);
      if (diff < best_diff) best_diff = diff, ref_len = len;
    }
    double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(hyp_len));
    total += bp * std::exp(log_prec);
  }
  return total / double(set.samples.size());
}

/// Negative least-squares slope of ln(frequency) vs ln(rank), ranks ordered
/// by descending frequency.
inline double zipf_from_counts(std::vector<double> counts) {
  std::sort(counts.begin(), counts.end(), std::greater<>());
  while (!counts.empty() && counts.back() <= 0.0) counts.pop_back();
  if (counts.size() < 2) throw std::invalid_argument("degenerate frequency distribution");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = double(counts.size());
  for (std::size_t r = 0; r < counts.size(); ++r) {
    double x = std::log(double(r + 1));
    double y = std::log(counts[r]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -slope;
}

/// Zipf coefficient of the pooled token statistics of a corpus of samples.
inline double zipf_coeff(const std::vector<TokenSeq>& samples) {
  std::map<int, std::int64_t> freq;
  for (const auto& s : samples)
    for (int t : s) ++freq[t];
  std::vector<double> counts;
  for (auto& [t, c] : freq) counts.push_back(double(c));
  return zipf_from_counts(std::move(counts));
}

/// Token-level Levenshtein distance / reference length.
inline double wer(const TokenSeq& hyp, const TokenSeq& ref) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return double(prev[m]) / double(m);
}

/// Distinct tokens / length of a single sample (no cross-seed pooling).
inline double unique_token_fraction(const TokenSeq& sample) {
  if (sample.empty()) throw std::invalid_argument("unique_token_fraction: empty sample");
  std::set<int> uniq(sample.begin(), sample.end());
  return double(uniq.size()) / double(sample.size());
}

// ---- batch evaluation ----

/// External per-token log-probabilities: JSON Lines of {tokens, logprobs}.
struct LogprobRecord {
  TokenSeq tokens;
  std::vector<double> logprobs;
};

inline std::vector<LogprobRecord> read_logprob_file(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<LogprobRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    LogprobRecord r;
    r.tokens = j.at("tokens").get<TokenSeq>();
    r.logprobs = j.at("logprobs").get<std::vector<double>>();
    if (r.tokens.size() != r.logprobs.size())
      throw std::runtime_error("logprob file line " + std::to_string(lineno) +
                               ": tokens/logprobs length mismatch");
    out.push_back(std::move(r));
  }
  return out;
}

inline double mean_nll(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw std::invalid_argument("mean_nll: empty");
  double t = 0.0;
  for (double lp : logprobs) t -= lp;
  return t / double(logprobs.size());
}

/// Looks up the continuation's per-token logprobs in an external file; the
/// token sequences must match exactly.
inline double ar_nll_from_file(const std::vector<LogprobRecord>& records, const TokenSeq& tokens) {
  for (const auto& r : records) {
    if (r.tokens == tokens) return mean_nll(r.logprobs);
  }
  throw std::runtime_error("logprob file has no entry for sample");
}

struct EvalOptions {
  const ARModel* ar_model = nullptr;
  const std::vector<LogprobRecord>* logprobs = nullptr;
  int cond_tokens = 0;  // prompt prefix length used for AR-NLL conditioning
};

struct EvalResult {
  std::vector<MetricReport> rows;   // one per prompt
  MetricReport macro;               // mean over rows
  std::optional<double> pooled_zipf;
};

/// One MetricReport per prompt plus a macro-average row. Diversity metrics
/// need at least 2 samples per set and are skipped otherwise.
inline EvalResult evaluate(const std::vector<SampleSet>& sets, const EvalOptions& opts = {}) {
  EvalResult res;
  std::vector<TokenSeq> pooled;
  for (const auto& set : sets) {
    MetricReport r;
    if (set.samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
    if (set.samples.size() >= 2) {
      r.dist_1 = dist_n(set, 1);
      r.dist_2 = dist_n(set, 2);
      r.dist_3 = dist_n(set, 3);
      r.self_bleu = self_bleu(set);
    }
    double uniq = 0.0;
    for (const auto& s : set.samples) uniq += unique_token_fraction(s);
    r.unique_token_fraction = uniq / double(set.samples.size());
    if (opts.ar_model || opts.logprobs) {
      double nll = 0.0;
      for (const auto& s : set.samples) {
        if (opts.logprobs) {
          nll += ar_nll_from_file(*opts.logprobs, s);
        } else {
          TokenSeq prefix(s.begin(), s.begin() + std::min<std::size_t>(s.size(), std::size_t(opts.cond_tokens)));
          TokenSeq cont(s.begin() + long(prefix.size()), s.end());
          nll += ar_nll(*opts.ar_model, prefix, cont);
        }
      }
      r.ar_nll = nll / double(set.samples.size());
    }
    for (const auto& s : set.samples) pooled.push_back(s);
    res.rows.push_back(r);
  }

  auto mean_of = [&](auto getter) -> std::optional<double> {
    double total = 0.0;
    int count = 0;
    for (const auto& r : res.rows) {
      auto v = getter(r);
      if (v) total += *v, ++count;
    }
    if (count == 0 || count != int(res.rows.size())) return std::nullopt;
    return total / double(count);
  };
  res.macro.ar_nll = mean_of([](const MetricReport& r) { return r.ar_nll; });
  res.macro.dist_1 = mean_of([](const MetricReport& r) { return r.dist_1; });
  res.macro.dist_2 = mean_of([](const MetricReport& r) { return r.dist_2; });
  res.macro.dist_3 = mean_of([](const MetricReport& r) { return r.dist_3; });
  res.macro.self_bleu = mean_of([](const MetricReport& r) { return r.self_bleu; });
  res.macro.unique_token_fraction =
      mean_of([](const MetricReport& r) { return r.unique_token_fraction; });
  try {
    res.pooled_zipf = zipf_coeff(pooled);
  } catch (const std::invalid_argument&) {
    res.pooled_zipf = std::nullopt;
  }
  return res;
}

}  // namespace ddlm
