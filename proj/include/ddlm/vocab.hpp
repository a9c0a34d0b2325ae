#pragma once

#include "ddlm/common.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace ddlm {

using TokenSeq = std::vector<int>;

enum class TokenMode { Char, Word };

inline const char* to_string(TokenMode m) { return m == TokenMode::Char ? "char" : "word"; }

inline TokenMode token_mode_from_string(const std::string& s) {
  if (s == "char") return TokenMode::Char;
  if (s == "word" || s == "whitespace-word") return TokenMode::Word;
  throw std::invalid_argument("unknown token mode: " + s);
}

/// Immutable token table. PAD is always id 0; unknown text maps to PAD.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static inline const std::string kPadToken = "<pad>";

  Vocabulary(std::vector<std::string> tokens, TokenMode mode)
      : tokens_(std::move(tokens)), mode_(mode) {
    if (tokens_.empty() || tokens_[0] != kPadToken)
      throw std::invalid_argument("vocabulary must start with PAD");
    for (int i = 0; i < int(tokens_.size()); ++i) id_of_[tokens_[i]] = i;
    if (id_of_.size() != tokens_.size())
      throw std::invalid_argument("duplicate token in vocabulary");
  }

  int size() const { return int(tokens_.size()); }
  TokenMode mode() const { return mode_; }
  const std::string& lookup(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return tokens_[std::size_t(id)];
  }
  int id_of(const std::string& tok) const {
    auto it = id_of_.find(tok);
    return it == id_of_.end() ? kPadId : it->second;
  }
  bool contains(const std::string& tok) const { return id_of_.count(tok) != 0; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> id_of_;
  TokenMode mode_;
};

inline std::vector<std::string> split_tokens(const std::string& text, TokenMode mode) {
  std::vector<std::string> out;
  if (mode == TokenMode::Char) {
    for (char c : text) out.emplace_back(1, c);
  } else {
    std::string cur;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
  }
  return out;
}

/// Most-frequent tokens up to max_size (PAD included in the budget).
/// Ties broken lexicographically so the result is deterministic.
inline Vocabulary build_vocabulary(const std::string& text, TokenMode mode, int max_size) {
  if (text.empty()) throw std::invalid_argument("empty corpus");
  if (max_size < 2) throw std::invalid_argument("max_size must be at least 2");
  std::map<std::string, std::int64_t> freq;
  for (auto& tok : split_tokens(text, mode)) ++freq[tok];
  std::vector<std::pair<std::string, std::int64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens{Vocabulary::kPadToken};
  for (auto& [tok, n] : items) {
    if (int(tokens.size()) >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens), mode);
}

/// Encode to exactly seq_len ids: pad right, truncate right, unknown -> PAD.
inline TokenSeq encode(const std::string& text, const Vocabulary& vocab, int seq_len) {
  if (seq_len < 1) throw std::invalid_argument("seq_len must be positive");
  TokenSeq ids;
  ids.reserve(std::size_t(seq_len));
  for (auto& tok : split_tokens(text, vocab.mode())) {
    if (int(ids.size()) >= seq_len) break;
    ids.push_back(vocab.id_of(tok));
  }
  ids.resize(std::size_t(seq_len), Vocabulary::kPadId);
  return ids;
}

inline std::string decode(const TokenSeq& ids, const Vocabulary& vocab) {
  std::string out;
  const char* sep = vocab.mode() == TokenMode::Word ? " " : "";
  bool first = true;
  for (int id : ids) {
    if (id == Vocabulary::kPadId) continue;
    if (!first) out += sep;
    out += vocab.lookup(id);
    first = false;
  }
  return out;
}

// Newline and backslash are escaped so char-mode tokens survive the
// one-token-per-line layout.
inline std::string escape_token(const std::string& tok) {
  std::string out;
  for (char c : tok) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

inline std::string unescape_token(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      out += (s[i + 1] == 'n') ? '\n' : s[i + 1];
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

/// One token per line, line number = id.
inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::string body;
  body += std::string("#mode=") + to_string(vocab.mode()) + "\n";
  for (int i = 0; i < vocab.size(); ++i) body += escape_token(vocab.lookup(i)) + "\n";
  atomic_write_file(path, body);
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#mode=", 0) != 0)
    throw std::runtime_error("vocabulary file missing mode header: " + path);
  TokenMode mode = token_mode_from_string(line.substr(6));
  std::vector<std::string> tokens;
  while (std::getline(in, line)) tokens.push_back(unescape_token(line));
  return Vocabulary(std::move(tokens), mode);
}

}  // namespace ddlm
