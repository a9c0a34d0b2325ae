#pragma once

#include "ddlm/common.hpp"
#include "ddlm/vocab.hpp"

#include <json.hpp>

#include <optional>

namespace ddlm {

constexpr int kTraceVersion = 1;

/// Per-step generation statistics. kl_mean and token_switches need a
/// predecessor and are absent at step 0. Snapshots are stored only at
/// stats+states verbosity.
struct StepRecord {
  int step = 0;
  double t = 0.0;
  double entropy_mean = 0.0;
  std::optional<double> kl_mean;
  std::optional<int> token_switches;
  double l2_X = 0.0;
  double l2_X0hat = 0.0;
  TokenSeq tokens;
  std::optional<Mat> X_snapshot;
  std::optional<Mat> X0_snapshot;
};

struct TraceMeta {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::vector<bool> gen_mask;  // true = generated (non-conditioned) position
  nlohmann::json config;
};

struct GenerationTrace {
  TraceMeta meta;
  std::vector<StepRecord> records;
};

inline void record_step(GenerationTrace& trace, StepRecord rec) {
  if (!trace.records.empty() && rec.step <= trace.records.back().step)
    throw std::invalid_argument("record_step: out-of-order step");
  trace.records.push_back(std::move(rec));
}

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const nlohmann::json& j) {
  Eigen::Index rows = Eigen::Index(j.size());
  Eigen::Index cols = rows > 0 ? Eigen::Index(j[0].size()) : 0;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = j[std::size_t(i)][std::size_t(jj)];
  return m;
}

}  // namespace detail

/// JSON Lines: line 1 is the meta object, each further line one StepRecord.
/// nlohmann emits shortest round-trip doubles, so floats survive bitwise.
inline std::string trace_to_jsonl(const GenerationTrace& trace) {
  nlohmann::json meta{{"version", kTraceVersion},
                      {"run_id", trace.meta.run_id},
                      {"seed", trace.meta.seed},
                      {"checkpoint", trace.meta.checkpoint},
                      {"config", trace.meta.config}};
  nlohmann::json gm = nlohmann::json::array();
  for (bool b : trace.meta.gen_mask) gm.push_back(b ? 1 : 0);
  meta["gen_mask"] = std::move(gm);
  std::string out = meta.dump() + "\n";
  for (const auto& r : trace.records) {
    nlohmann::json j{{"step", r.step},
                     {"t", r.t},
                     {"entropy_mean", r.entropy_mean},
                     {"l2_X", r.l2_X},
                     {"l2_X0hat", r.l2_X0hat},
                     {"tokens", r.tokens}};
    if (r.kl_mean) j["kl_mean"] = *r.kl_mean;
    if (r.token_switches) j["token_switches"] = *r.token_switches;
    if (r.X_snapshot) j["X"] = detail::mat_to_json(*r.X_snapshot);
    if (r.X0_snapshot) j["X0"] = detail::mat_to_json(*r.X0_snapshot);
    out += j.dump() + "\n";
  }
  return out;
}

inline void write_trace(const GenerationTrace& trace, const std::string& path) {
  atomic_write_file(path, trace_to_jsonl(trace));
}

inline GenerationTrace trace_from_jsonl(const std::string& text) {
  GenerationTrace trace;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed trace line " + std::to_string(lineno) + ": " + e.what());
    }
    if (lineno == 1) {
      int version = j.value("version", -1);
      if (version != kTraceVersion)
        throw std::runtime_error("unsupported trace version: " + std::to_string(version));
      trace.meta.run_id = j.value("run_id", "");
      trace.meta.seed = j.value("seed", std::uint64_t(0));
      trace.meta.checkpoint = j.value("checkpoint", "");
      trace.meta.config = j.value("config", nlohmann::json::object());
      for (const auto& b : j.value("gen_mask", nlohmann::json::array()))
        trace.meta.gen_mask.push_back(int(b) != 0);
      continue;
    }
    try {
      StepRecord r;
      r.step = j.at("step");
      r.t = j.at("t");
      r.entropy_mean = j.at("entropy_mean");
      r.l2_X = j.at("l2_X");
      r.l2_X0hat = j.at("l2_X0hat");
      r.tokens = j.value("tokens", TokenSeq{});
      if (j.contains("kl_mean")) r.kl_mean = double(j["kl_mean"]);
      if (j.contains("token_switches")) r.token_switches = int(j["token_switches"]);
      if (j.contains("X")) r.X_snapshot = detail::mat_from_json(j["X"]);
      if (j.contains("X0")) r.X0_snapshot = detail::mat_from_json(j["X0"]);
      record_step(trace, std::move(r));
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (trace.records.empty() && trace.meta.run_id.empty() && trace.meta.gen_mask.empty())
    throw std::runtime_error("empty trace");
  return trace;
}

inline GenerationTrace read_trace(const std::string& path) {
  return trace_from_jsonl(read_text_file(path));
}

struct CosSeries {
  std::vector<double> cos_score;
  std::vector<double> cos_embedding;
};

/// Cosine of the angle between each step's generated-position score (resp.
/// X) and its final-step counterpart. Needs stats+states snapshots.
inline CosSeries cos_to_final(const GenerationTrace& trace) {
  if (trace.records.empty()) throw std::invalid_argument("empty trace");
  for (const auto& r : trace.records)
    if (!r.X_snapshot || !r.X0_snapshot)
      throw std::runtime_error("trace lacks state snapshots (record with stats+states)");
  const auto& gen = trace.meta.gen_mask;

  auto flatten_gen = [&](const Mat& m) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!gen.empty() && !gen[std::size_t(i)]) continue;
      for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
    }
    return v;
  };
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i], na += a[i] * a[i], nb += b[i] * b[i];
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  };
  auto score_of = [&](const StepRecord& r) {
    Mat s = (*r.X0_snapshot - *r.X_snapshot) / (r.t * r.t);
    return flatten_gen(s);
  };

  const StepRecord& fin = trace.records.back();
  std::vector<double> final_score = score_of(fin);
  std::vector<double> final_x = flatten_gen(*fin.X_snapshot);

  CosSeries out;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    if (i + 1 == trace.records.size()) {
      out.cos_score.push_back(1.0);
      out.cos_embedding.push_back(1.0);
      break;
    }
    const auto& r = trace.records[i];
    out.cos_score.push_back(cosine(score_of(r), final_score));
    out.cos_embedding.push_back(cosine(flatten_gen(*r.X_snapshot), final_x));
  }
  return out;
}

}  // namespace ddlm
