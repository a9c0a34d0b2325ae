#pragma once

#include "ddlm/vocab.hpp"

#include <numeric>

namespace ddlm {

struct CorpusBatch {
  std::vector<TokenSeq> sequences;
  int batch_size() const { return int(sequences.size()); }
};

/// Cut raw text into fixed-length encoded windows (stride == seq_len).
inline std::vector<TokenSeq> encode_corpus(const std::string& text, const Vocabulary& vocab,
                                           int seq_len) {
  if (text.empty()) throw std::invalid_argument("empty corpus");
  auto toks = split_tokens(text, vocab.mode());
  std::vector<TokenSeq> out;
  for (std::size_t pos = 0; pos < toks.size(); pos += std::size_t(seq_len)) {
    TokenSeq seq;
    seq.reserve(std::size_t(seq_len));
    for (std::size_t i = pos; i < std::min(toks.size(), pos + std::size_t(seq_len)); ++i)
      seq.push_back(vocab.id_of(toks[i]));
    seq.resize(std::size_t(seq_len), Vocabulary::kPadId);
    out.push_back(std::move(seq));
  }
  return out;
}

/// Epoch permutation for a given (seed, epoch). Fisher-Yates over our own RNG
/// so the order is stable across platforms.
inline std::vector<int> epoch_permutation(int n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<int> perm(std::size_t(n), 0);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng::derive(seed, 0xba7c4e5u, epoch);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[std::size_t(i)], perm[rng.uniform_int(std::uint64_t(i) + 1)]);
  return perm;
}

/// Deterministic shuffled batch stream. Every sequence appears exactly once
/// per epoch; the final batch of an epoch may be short.
class BatchStream {
 public:
  BatchStream(std::vector<TokenSeq> corpus, int batch_size, std::uint64_t seed)
      : corpus_(std::move(corpus)), batch_size_(batch_size), seed_(seed) {
    if (corpus_.empty()) throw std::invalid_argument("empty corpus");
    if (batch_size_ < 1) throw std::invalid_argument("batch_size must be positive");
  }

  int n_sequences() const { return int(corpus_.size()); }
  int batches_per_epoch() const {
    return (n_sequences() + batch_size_ - 1) / batch_size_;
  }

  /// Batch by global index; deterministic random access enables resume.
  CorpusBatch batch(std::int64_t index) const {
    std::int64_t per = batches_per_epoch();
    std::int64_t epoch = index / per;
    std::int64_t slot = index % per;
    auto perm = epoch_permutation(n_sequences(), seed_, std::uint64_t(epoch));
    CorpusBatch b;
    for (std::int64_t i = slot * batch_size_;
         i < std::min<std::int64_t>(n_sequences(), (slot + 1) * batch_size_); ++i)
      b.sequences.push_back(corpus_[std::size_t(perm[std::size_t(i)])]);
    return b;
  }

  const std::vector<TokenSeq>& corpus() const { return corpus_; }

 private:
  std::vector<TokenSeq> corpus_;
  int batch_size_;
  std::uint64_t seed_;
};

}  // namespace ddlm
