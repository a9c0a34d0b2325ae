// Command-line front end: train, generate, sweep, analyze, eval,
// trace-to-csv. Exit codes: 0 ok, 1 runtime failure, 2 usage/config error.

#include "ddlm/config.hpp"
#include "ddlm/metrics.hpp"
#include "ddlm/sampler.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace ddlm;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw ConfigError("empty value list: " + s);
  return out;
}

void apply_halt_flags(CLI::App* cmd, HaltConfig& halt, std::string& kind_str) {
  cmd->add_option("--halt", kind_str, "halting criterion: none|entropy|patience|kl|fixed");
  cmd->add_option("--e-t", halt.e_t, "entropy threshold (nats)");
  cmd->add_option("--d-t", halt.d_t, "KL threshold (nats)");
  cmd->add_option("--patience", halt.patience_p, "consecutive calm steps before halting");
  cmd->add_option("--switch-threshold", halt.switch_threshold, "patience switch tolerance");
  cmd->add_option("--min-steps", halt.min_steps, "no halting before this step");
  cmd->add_option("--fixed-step", halt.fixed_step, "fixed halting step");
  cmd->add_flag("--kl-halt-above", halt.kl_halt_above, "flip the KL comparison");
}

struct SampleLine {
  int prompt_index = 0;
  int sample_index = 0;
  std::uint64_t seed = 0;
  int halt_step = 0;
  bool halted_early = false;
  TokenSeq tokens;
  std::string text;
};

std::vector<SampleLine> read_samples(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<SampleLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    SampleLine s;
    s.prompt_index = j.value("prompt_index", 0);
    s.sample_index = j.value("sample_index", 0);
    s.seed = j.value("seed", std::uint64_t(0));
    s.halt_step = j.value("halt_step", 0);
    s.halted_early = j.value("halted_early", false);
    s.tokens = j.value("tokens", TokenSeq{});
    s.text = j.value("text", "");
    out.push_back(std::move(s));
  }
  return out;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& run_dir_override,
              std::int64_t steps_override, const std::string& corpus_override,
              const std::string& grid_spec, bool train_ar_flag, bool quiet) {
  RunConfig cfg = load_run_config(config_path);
  if (!run_dir_override.empty()) cfg.run_dir = run_dir_override;
  if (steps_override >= 0) cfg.train.steps = steps_override;
  if (!corpus_override.empty()) cfg.corpus.path = corpus_override;
  if (train_ar_flag) cfg.train_ar = true;
  if (cfg.corpus.path.empty()) throw ConfigError("corpus.path is required for train");
  if (!fs::exists(cfg.corpus.path)) throw ConfigError("corpus file not found: " + cfg.corpus.path);

  std::vector<RunConfig> runs;
  if (!grid_spec.empty()) {
    if (grid_spec.rfind("t_max=", 0) != 0)
      throw ConfigError("--grid expects t_max=<v1,v2,...>, got: " + grid_spec);
    for (double t : parse_list(grid_spec.substr(6))) {
      RunConfig child = cfg;
      child.train.t_max = t;
      std::string tag = fmt(t);
      child.run_dir = (fs::path(cfg.run_dir) / ("t_max_" + tag)).string();
      runs.push_back(std::move(child));
    }
  } else {
    runs.push_back(cfg);
  }

  for (const RunConfig& run : runs) {
    std::string text = read_text_file(run.corpus.path);
    Vocabulary vocab = build_vocabulary(text, run.corpus.mode, run.corpus.max_vocab);
    auto sequences = encode_corpus(text, vocab, run.train.seq_len);
    BatchStream stream(std::move(sequences), run.train.batch_size, run.seed);

    fs::create_directories(run.run_dir);
    nlohmann::json snapshot = to_json(run);
    atomic_write_file((fs::path(run.run_dir) / "config.json").string(), snapshot.dump(2) + "\n");
    save_vocabulary(vocab, (fs::path(run.run_dir) / "vocab.txt").string());

    auto progress = [&](std::int64_t s, const StepStats& st) {
      if (!quiet && (s % 100 == 0 || s + 1 == run.train.steps))
        std::cerr << "step " << s << " loss " << st.loss << " lr " << st.lr << "\n";
    };
    TrainResult res =
        train(run.train, stream, run.run_dir, vocab.size(), {{"run", snapshot}}, progress);
    if (!quiet) std::cerr << "final checkpoint: " << res.final_checkpoint << "\n";

    if (run.train_ar) {
      ARTrainState ar = train_ar_reference(run.train, stream, vocab.size(),
                                           [&](std::int64_t s, double loss) {
                                             if (!quiet && s % 100 == 0)
                                               std::cerr << "ar step " << s << " loss " << loss << "\n";
                                           });
      save_ar_checkpoint((fs::path(run.run_dir) / "ar.ckpt").string(), ar, {{"run", snapshot}});
    }
    std::cout << run.run_dir << "\n";
  }
  return 0;
}

// ---- generate ----

int cmd_generate(const std::string& ckpt_path, const std::string& vocab_path,
                 const std::string& prompts_path, const std::string& out_dir, GenConfig gen,
                 int n_samples, bool quiet) {
  LoadedDenoiser loaded = load_denoiser_checkpoint(ckpt_path);
  const DenoiserModel& model = loaded.state.model;
  int seq_len = model.net.cfg.seq_len;
  double t_max = loaded.config.value("run", nlohmann::json::object())
                     .value("train", nlohmann::json::object())
                     .value("t_max", 10.0);

  std::optional<Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = load_vocabulary(vocab_path);
  if (vocab && vocab->size() != model.net.cfg.vocab)
    throw std::runtime_error("checkpoint/vocab mismatch: model vocab " +
                             std::to_string(model.net.cfg.vocab) + " vs file " +
                             std::to_string(vocab->size()));

  std::vector<TokenSeq> prompts;
  if (!prompts_path.empty()) {
    if (!vocab) throw ConfigError("--prompts requires --vocab");
    std::istringstream in(read_text_file(prompts_path));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) prompts.push_back(encode(line, *vocab, seq_len));
    if (prompts.empty()) throw ConfigError("prompts file has no nonempty lines");
  } else {
    if (gen.conditioning != Conditioning::Unconditional)
      throw ConfigError("conditioned generation requires --prompts");
    prompts.emplace_back(std::size_t(seq_len), Vocabulary::kPadId);  // placeholder, never read
  }

  fs::create_directories(fs::path(out_dir) / "traces");
  atomic_write_file((fs::path(out_dir) / "gen_config.json").string(),
                    gen.to_json().dump(2) + "\n");

  auto results = generate_batch(model, gen, prompts, n_samples, t_max, ckpt_path);
  std::string samples_out;
  for (int idx = 0; idx < int(results.size()); ++idx) {
    int p = idx / n_samples, k = idx % n_samples;
    const GenResult& r = results[std::size_t(idx)];
    nlohmann::json j{{"prompt_index", p},
                     {"sample_index", k},
                     {"seed", r.trace.meta.seed},
                     {"halt_step", r.halt_step},
                     {"halted_early", r.halted_early},
                     {"tokens", r.tokens}};
    if (vocab) j["text"] = decode(r.tokens, *vocab);
    samples_out += j.dump() + "\n";
    write_trace(r.trace, (fs::path(out_dir) / "traces" /
                          ("trace_p" + std::to_string(p) + "_s" + std::to_string(k) + ".jsonl"))
                             .string());
  }
  atomic_write_file((fs::path(out_dir) / "samples.jsonl").string(), samples_out);
  if (!quiet)
    std::cerr << results.size() << " samples written to " << out_dir << "\n";
  std::cout << (fs::path(out_dir) / "samples.jsonl").string() << "\n";
  return 0;
}

// ---- sweep ----

int cmd_sweep(const std::string& traces_dir, const std::string& out_csv,
              const std::string& entropy_list, const std::string& kl_list,
              const std::string& patience_list, const std::string& fixed_list,
              const std::string& ar_ckpt, bool kl_halt_above) {
  std::vector<GenerationTrace> traces;
  std::vector<fs::path> files;
  if (fs::is_directory(traces_dir)) {
    for (const auto& e : fs::directory_iterator(traces_dir))
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(traces_dir)) {
    files.push_back(traces_dir);
  }
  for (const auto& f : files) traces.push_back(read_trace(f.string()));
  if (traces.empty()) throw std::runtime_error("no traces found in " + traces_dir);
  int n_max = traces.front().records.back().step;

  std::vector<HaltConfig> grid;
  auto push = [&](HaltKind kind, double v) {
    HaltConfig h;
    h.kind = kind;
    h.kl_halt_above = kl_halt_above;
    switch (kind) {
      case HaltKind::Entropy: h.e_t = v; break;
      case HaltKind::KL: h.d_t = v; break;
      case HaltKind::Patience: h.patience_p = int(std::lround(v)); break;
      case HaltKind::Fixed: h.fixed_step = int(std::lround(v)); break;
      case HaltKind::None: break;
    }
    grid.push_back(h.resolved(n_max));
  };
  if (!entropy_list.empty())
    for (double v : parse_list(entropy_list)) push(HaltKind::Entropy, v);
  if (!kl_list.empty())
    for (double v : parse_list(kl_list)) push(HaltKind::KL, v);
  if (!patience_list.empty())
    for (double v : parse_list(patience_list)) push(HaltKind::Patience, v);
  if (!fixed_list.empty())
    for (double v : parse_list(fixed_list)) push(HaltKind::Fixed, v);
  if (grid.empty()) throw ConfigError("sweep needs at least one of --entropy/--kl/--patience/--fixed");

  std::optional<ARModel> ar;
  if (!ar_ckpt.empty()) ar = load_ar_checkpoint(ar_ckpt);

  std::vector<SweepRow> rows = sweep(traces, grid);
  // AR-NLL of the tokens each run would emit at its (replayed) halt step.
  std::vector<std::string> nll_col(rows.size());
  if (ar) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      // sweep() sorts rows; re-derive the matching config by criterion+threshold
      const HaltConfig* match = nullptr;
      for (const auto& g : grid)
        if (to_string(g.kind) == rows[i].criterion && sweep_threshold_of(g) == rows[i].threshold)
          match = &g;
      if (!match) continue;
      double total = 0.0;
      for (const auto& tr : traces) {
        auto h = replay(tr, *match);
        int step = h.value_or(tr.records.back().step);
        total += ar_nll(*ar, {}, tr.records[std::size_t(step)].tokens);
      }
      nll_col[i] = fmt(total / double(traces.size()));
    }
  }

  std::ostringstream csv;
  csv << "criterion,threshold,mean_halt_step,frac_halted,mean_ar_nll\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    csv << rows[i].criterion << ',' << fmt(rows[i].threshold) << ',' << fmt(rows[i].mean_halt_step)
        << ',' << fmt(rows[i].frac_halted) << ',' << nll_col[i] << '\n';
  atomic_write_file(out_csv, csv.str());
  std::cout << out_csv << "\n";
  return 0;
}

// ---- analyze ----

void write_dynamics_csv(const GenerationTrace& trace, const std::string& out_path) {
  bool has_states = !trace.records.empty();
  for (const auto& r : trace.records)
    has_states = has_states && r.X_snapshot.has_value() && r.X0_snapshot.has_value();

  std::ostringstream csv;
  if (has_states) {
    CosSeries cos = cos_to_final(trace);
    const TokenSeq& final_tokens = trace.records.back().tokens;
    csv << "step,t,entropy,switches,kl,l2_X,l2_X0hat,cos_score_final,cos_emb_final,wer_to_final\n";
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      const auto& r = trace.records[i];
      csv << r.step << ',' << fmt(r.t) << ',' << fmt(r.entropy_mean) << ','
          << (r.token_switches ? std::to_string(*r.token_switches) : "") << ','
          << (r.kl_mean ? fmt(*r.kl_mean) : "") << ',' << fmt(r.l2_X) << ',' << fmt(r.l2_X0hat)
          << ',' << fmt(cos.cos_score[i]) << ',' << fmt(cos.cos_embedding[i]) << ','
          << fmt(wer(r.tokens, final_tokens)) << '\n';
    }
  } else {
    csv << "# warning: trace lacks state snapshots; cos/wer columns omitted\n";
    csv << "step,t,entropy,switches,kl,l2_X,l2_X0hat\n";
    for (const auto& r : trace.records)
      csv << r.step << ',' << fmt(r.t) << ',' << fmt(r.entropy_mean) << ','
          << (r.token_switches ? std::to_string(*r.token_switches) : "") << ','
          << (r.kl_mean ? fmt(*r.kl_mean) : "") << ',' << fmt(r.l2_X) << ',' << fmt(r.l2_X0hat)
          << '\n';
  }
  atomic_write_file(out_path, csv.str());
}

int cmd_analyze(const std::string& trace_path, const std::string& out_path, bool noise_sweep,
                const std::string& ckpt_path, int n_steps, std::uint64_t seed) {
  if (noise_sweep) {
    if (ckpt_path.empty()) throw ConfigError("--noise-sweep requires --checkpoint");
    LoadedDenoiser loaded = load_denoiser_checkpoint(ckpt_path);
    double t_max = loaded.config.value("run", nlohmann::json::object())
                       .value("train", nlohmann::json::object())
                       .value("t_max", 10.0);
    fs::create_directories(out_path);
    TokenSeq dummy(std::size_t(loaded.state.model.net.cfg.seq_len), Vocabulary::kPadId);
    for (double scale : {0.0, 0.5, 0.8, 0.9, 1.0, 1.1, 1.2}) {
      GenConfig gen;
      gen.n_steps = n_steps;
      gen.noise_scale = scale;
      gen.seed = seed;
      gen.record = TraceVerbosity::StatsStates;
      GenResult r = generate(loaded.state.model, gen, dummy, t_max, ckpt_path);
      write_dynamics_csv(r.trace,
                         (fs::path(out_path) / ("dynamics_scale_" + fmt(scale) + ".csv")).string());
    }
    std::cout << out_path << "\n";
    return 0;
  }
  if (trace_path.empty()) throw ConfigError("analyze needs --trace or --noise-sweep");
  write_dynamics_csv(read_trace(trace_path), out_path);
  std::cout << out_path << "\n";
  return 0;
}

// ---- eval ----

int cmd_eval(const std::vector<std::string>& samples_files, const std::string& ar_ckpt,
             const std::string& logprob_path, const std::string& out_csv, int cond_tokens) {
  std::map<int, SampleSet> by_prompt;
  for (const auto& f : samples_files)
    for (auto& s : read_samples(f)) by_prompt[s.prompt_index].samples.push_back(s.tokens);
  if (by_prompt.empty()) throw std::runtime_error("no samples found");

  std::vector<SampleSet> sets;
  for (auto& [p, set] : by_prompt) sets.push_back(std::move(set));
  bool warned = false;
  for (const auto& set : sets)
    if (set.samples.size() < 2 && !warned) {
      std::cerr << "warning: fewer than 2 samples per prompt; diversity columns absent\n";
      warned = true;
    }

  std::optional<ARModel> ar;
  std::vector<LogprobRecord> logprobs;
  EvalOptions opts;
  opts.cond_tokens = cond_tokens;
  if (!logprob_path.empty()) {
    logprobs = read_logprob_file(logprob_path);
    opts.logprobs = &logprobs;
  } else if (!ar_ckpt.empty()) {
    ar = load_ar_checkpoint(ar_ckpt);
    opts.ar_model = &*ar;
  }

  EvalResult res = evaluate(sets, opts);
  std::ostringstream csv;
  csv << "prompt,ar_nll,dist_1,dist_2,dist_3,self_bleu,zipf,unique_token_fraction\n";
  int p = 0;
  for (const auto& r : res.rows) {
    csv << p++ << ',' << opt_fmt(r.ar_nll) << ',' << opt_fmt(r.dist_1) << ',' << opt_fmt(r.dist_2)
        << ',' << opt_fmt(r.dist_3) << ',' << opt_fmt(r.self_bleu) << ",," // zipf is pooled-only
        << opt_fmt(r.unique_token_fraction) << '\n';
  }
  csv << "macro," << opt_fmt(res.macro.ar_nll) << ',' << opt_fmt(res.macro.dist_1) << ','
      << opt_fmt(res.macro.dist_2) << ',' << opt_fmt(res.macro.dist_3) << ','
      << opt_fmt(res.macro.self_bleu) << ',' << opt_fmt(res.pooled_zipf) << ','
      << opt_fmt(res.macro.unique_token_fraction) << '\n';
  atomic_write_file(out_csv, csv.str());
  std::cout << out_csv << "\n";
  return 0;
}

// ---- trace-to-csv ----

int cmd_trace_to_csv(const std::string& trace_path, const std::string& out_csv) {
  GenerationTrace trace = read_trace(trace_path);
  std::ostringstream csv;
  csv << "step,t,entropy_mean,kl_mean,token_switches,l2_X,l2_X0hat\n";
  for (const auto& r : trace.records)
    csv << r.step << ',' << fmt(r.t) << ',' << fmt(r.entropy_mean) << ','
        << (r.kl_mean ? fmt(*r.kl_mean) : "") << ','
        << (r.token_switches ? std::to_string(*r.token_switches) : "") << ',' << fmt(r.l2_X) << ','
        << fmt(r.l2_X0hat) << '\n';
  atomic_write_file(out_csv, csv.str());
  std::cout << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-diffusion text model: training, sampling, early-exit analysis"};
  app.require_subcommand(1);

  // train
  auto* t = app.add_subcommand("train", "train the denoiser (and optional AR reference)");
  std::string t_config, t_run_dir, t_corpus, t_grid;
  std::int64_t t_steps = -1;
  bool t_ar = false, t_quiet = false;
  t->add_option("--config", t_config, "JSON run config")->required();
  t->add_option("--run-dir", t_run_dir, "override run directory");
  t->add_option("--steps", t_steps, "override training steps");
  t->add_option("--corpus", t_corpus, "override corpus path");
  t->add_option("--grid", t_grid, "train one model per value, e.g. t_max=10,50");
  t->add_flag("--train-ar", t_ar, "also train the AR reference model");
  t->add_flag("--quiet", t_quiet, "suppress progress output");

  // generate
  auto* g = app.add_subcommand("generate", "sample text and write per-step traces");
  std::string g_ckpt, g_vocab, g_prompts, g_out = "gen", g_record = "stats", g_cond, g_halt_kind,
              g_grid_kind;
  GenConfig g_gen;
  int g_samples = 1;
  bool g_quiet = false;
  g->add_option("--checkpoint", g_ckpt, "denoiser checkpoint")->required();
  g->add_option("--vocab", g_vocab, "vocabulary file (needed for text output / prompts)");
  g->add_option("--prompts", g_prompts, "prompt file, one per line");
  g->add_option("--out", g_out, "output directory");
  g->add_option("--n-steps", g_gen.n_steps, "generation steps (N_max)");
  g->add_option("--noise-scale", g_gen.noise_scale, "initial noise scale");
  g->add_option("--conditioning", g_cond, "unconditional|prefix|enclosed");
  g->add_option("--cond-tokens", g_gen.cond_tokens, "conditioned token count");
  g->add_option("--seed", g_gen.seed, "base RNG seed");
  g->add_option("--samples", g_samples, "samples per prompt");
  g->add_option("--record", g_record, "trace verbosity: stats|stats+states");
  g->add_option("--time-grid", g_grid_kind, "linear|geometric");
  g->add_flag("--quiet", g_quiet, "suppress progress output");
  apply_halt_flags(g, g_gen.halt, g_halt_kind);

  // sweep
  auto* s = app.add_subcommand("sweep", "replay traces over a threshold grid");
  std::string s_traces, s_out = "sweep.csv", s_entropy, s_kl, s_patience, s_fixed, s_ar;
  bool s_above = false;
  s->add_option("--traces", s_traces, "trace file or directory of .jsonl traces")->required();
  s->add_option("--out", s_out, "output CSV");
  s->add_option("--entropy", s_entropy, "entropy thresholds, comma-separated");
  s->add_option("--kl", s_kl, "KL thresholds, comma-separated");
  s->add_option("--patience", s_patience, "patience values, comma-separated");
  s->add_option("--fixed", s_fixed, "fixed steps, comma-separated");
  s->add_option("--ar-checkpoint", s_ar, "AR reference for the mean_ar_nll column");
  s->add_flag("--kl-halt-above", s_above, "flip the KL comparison");

  // analyze
  auto* a = app.add_subcommand("analyze", "per-step dynamics CSV from a trace");
  std::string a_trace, a_out = "dynamics.csv", a_ckpt;
  bool a_noise = false;
  int a_steps = 200;
  std::uint64_t a_seed = 0;
  a->add_option("--trace", a_trace, "trace file (stats+states for cos/wer columns)");
  a->add_option("--out", a_out, "output CSV (or directory in --noise-sweep mode)");
  a->add_flag("--noise-sweep", a_noise, "generate and analyze one trace per noise scale");
  a->add_option("--checkpoint", a_ckpt, "denoiser checkpoint for --noise-sweep");
  a->add_option("--n-steps", a_steps, "generation steps for --noise-sweep");
  a->add_option("--seed", a_seed, "seed for --noise-sweep");

  // eval
  auto* e = app.add_subcommand("eval", "metric report CSV over sample files");
  std::vector<std::string> e_samples;
  std::string e_ar, e_logprobs, e_out = "metrics.csv";
  int e_cond = 0;
  e->add_option("--samples", e_samples, "samples.jsonl file(s)")->required();
  e->add_option("--ar-checkpoint", e_ar, "AR reference checkpoint for AR-NLL");
  e->add_option("--logprobs", e_logprobs, "external per-token logprob JSONL");
  e->add_option("--out", e_out, "output CSV");
  e->add_option("--cond-tokens", e_cond, "prompt prefix length excluded from AR-NLL");

  // trace-to-csv
  auto* c = app.add_subcommand("trace-to-csv", "flatten a trace to one CSV row per step");
  std::string c_trace, c_out = "trace.csv";
  c->add_option("--trace", c_trace, "trace file")->required();
  c->add_option("--out", c_out, "output CSV");

  try {
    app.parse(argc, argv);
    if (*t) return cmd_train(t_config, t_run_dir, t_steps, t_corpus, t_grid, t_ar, t_quiet);
    if (*g) {
      if (!g_cond.empty()) g_gen.conditioning = conditioning_from_string(g_cond);
      if (!g_halt_kind.empty()) g_gen.halt.kind = halt_kind_from_string(g_halt_kind);
      if (g_record == "stats+states")
        g_gen.record = TraceVerbosity::StatsStates;
      else if (g_record != "stats")
        throw ConfigError("--record must be stats or stats+states");
      if (!g_grid_kind.empty()) {
        if (g_grid_kind == "geometric")
          g_gen.grid = GridKind::Geometric;
        else if (g_grid_kind != "linear")
          throw ConfigError("--time-grid must be linear or geometric");
      }
      return cmd_generate(g_ckpt, g_vocab, g_prompts, g_out, g_gen, g_samples, g_quiet);
    }
    if (*s) return cmd_sweep(s_traces, s_out, s_entropy, s_kl, s_patience, s_fixed, s_ar, s_above);
    if (*a) return cmd_analyze(a_trace, a_out, a_noise, a_ckpt, a_steps, a_seed);
    if (*e) return cmd_eval(e_samples, e_ar, e_logprobs, e_out, e_cond);
    if (*c) return cmd_trace_to_csv(c_trace, c_out);
    return 2;
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& pe) {
    app.exit(pe);
    return 2;
  } catch (const ConfigError& ce) {
    std::cerr << "config error: " << ce.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& ia) {
    std::cerr << "usage error: " << ia.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
