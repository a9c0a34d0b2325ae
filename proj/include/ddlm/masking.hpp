#pragma once

#include "ddlm/common.hpp"

#include <algorithm>

namespace ddlm {

enum class MaskStrategy { MLM, Prefix, Span };

inline const char* to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::MLM: return "mlm";
    case MaskStrategy::Prefix: return "prefix";
    case MaskStrategy::Span: return "span";
  }
  return "?";
}

inline MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "mlm") return MaskStrategy::MLM;
  if (s == "prefix") return MaskStrategy::Prefix;
  if (s == "span") return MaskStrategy::Span;
  throw std::invalid_argument("unknown mask strategy: " + s);
}

/// Which positions receive noise during training. The loss is computed only
/// on masked (noised) positions.
struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::MLM;
  // Default rate 1.0 noises every position, matching the fully-noised input
  // distribution that unconditional generation starts from.
  double mlm_rate = 1.0;
  int prefix_len_min = 1;
  int prefix_len_max = 32;   // inclusive; clamped to seq_len - 1
  int k_max = 9;             // span count bound
  double span_noise_prob = 0.5;
};

struct MaskResult {
  std::vector<bool> mask;  // true = position is noised
  bool resampled = false;  // an all-false draw was resampled once
};

namespace detail {

inline std::vector<bool> draw_mask(const MaskSpec& spec, int seq_len, Rng& rng) {
  std::vector<bool> mask(std::size_t(seq_len), false);
  switch (spec.strategy) {
    case MaskStrategy::MLM:
      for (int i = 0; i < seq_len; ++i) mask[std::size_t(i)] = rng.uniform() < spec.mlm_rate;
      break;
    case MaskStrategy::Prefix: {
      int lo = std::clamp(spec.prefix_len_min, 0, seq_len - 1);
      int hi = std::clamp(spec.prefix_len_max, lo, seq_len - 1);
      int prefix = lo + int(rng.uniform_int(std::uint64_t(hi - lo) + 1));
      for (int i = prefix; i < seq_len; ++i) mask[std::size_t(i)] = true;
      break;
    }
    case MaskStrategy::Span: {
      // k spans from k-1 uniform cut indices; each span noised independently.
      int k = 1 + int(rng.uniform_int(std::uint64_t(std::max(spec.k_max, 1))));
      std::vector<int> cuts{0, seq_len};
      for (int c = 0; c < k - 1; ++c) cuts.push_back(1 + int(rng.uniform_int(std::uint64_t(seq_len - 1))));
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        bool noised = rng.uniform() < spec.span_noise_prob;
        if (noised)
          for (int i = cuts[s]; i < cuts[s + 1]; ++i) mask[std::size_t(i)] = true;
      }
      break;
    }
  }
  return mask;
}

}  // namespace detail

/// Deterministic for a given seed. An all-false draw is resampled once and
/// then accepted with the resampled flag set.
inline MaskResult sample_mask(const MaskSpec& spec, int seq_len, std::uint64_t rng_seed) {
  if (seq_len < 2) throw std::invalid_argument("sample_mask needs seq_len >= 2");
  Rng rng = Rng::derive(rng_seed, 0x6d61736bu);
  MaskResult res;
  res.mask = detail::draw_mask(spec, seq_len, rng);
  if (std::none_of(res.mask.begin(), res.mask.end(), [](bool b) { return b; })) {
    res.mask = detail::draw_mask(spec, seq_len, rng);
    res.resampled = true;
  }
  return res;
}

}  // namespace ddlm
