#pragma once

#include "ddlm/vocab.hpp"

namespace ddlm {

/// Token embedding matrix whose rows are kept at L2 norm sqrt(d), i.e. the
/// embedding sphere. d = 256 gives row norm 16.
struct EmbeddingTable {
  Mat matrix;  // vocab_size x d
  int d() const { return int(matrix.cols()); }
  int vocab_size() const { return int(matrix.rows()); }
  double target_norm() const { return std::sqrt(double(d())); }
};

inline EmbeddingTable random_embedding_table(int vocab_size, int d, Rng& rng) {
  EmbeddingTable t;
  t.matrix.resize(vocab_size, d);
  rng.fill_normal(t.matrix);
  return t;
}

/// Rescale every row to norm sqrt(d), preserving direction. Idempotent.
inline void normalize_embeddings(EmbeddingTable& table) {
  double target = table.target_norm();
  for (Eigen::Index v = 0; v < table.matrix.rows(); ++v) {
    double n = table.matrix.row(v).norm();
    if (n <= 0.0) throw std::runtime_error("degenerate embedding");
    table.matrix.row(v) *= target / n;
  }
}

/// Row i = embedding of tokens[i].
inline Mat embed(const TokenSeq& tokens, const EmbeddingTable& table) {
  Mat out(Eigen::Index(tokens.size()), table.d());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= table.vocab_size())
      throw std::out_of_range("token id out of range in embed");
    out.row(Eigen::Index(i)) = table.matrix.row(tokens[i]);
  }
  return out;
}

}  // namespace ddlm
