#pragma once

#include "ddlm/ar_model.hpp"
#include "ddlm/checkpoint.hpp"
#include "ddlm/corpus.hpp"
#include "ddlm/denoiser.hpp"
#include "ddlm/masking.hpp"
#include "ddlm/optim.hpp"
#include "ddlm/schedule.hpp"
#include "ddlm/threading.hpp"

#include <iomanip>

namespace ddlm {

struct TrainConfig {
  // model
  int d = 64;        // embedding dim
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 2;
  int seq_len = 64;
  // optimization
  double t_max = 10.0;
  std::int64_t steps = 5000;
  int batch_size = 32;
  double lr = 3e-4;
  std::int64_t warmup_steps = 100;
  double grad_clip = 1.0;
  MaskSpec mask_spec;
  bool time_warping = true;
  double warp_ema_rate = 0.01;
  int warp_bins = 32;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0 = final only

  NetConfig net_config(int vocab) const {
    NetConfig n;
    n.vocab = vocab;
    n.d_in = d;
    n.d_model = d_model;
    n.n_heads = n_heads;
    n.n_layers = n_layers;
    n.seq_len = seq_len;
    n.causal = false;
    return n;
  }
};

/// Mean cross-entropy (nats) over masked positions only.
inline double cdcd_loss(const TokenDistribution& dist, const TokenSeq& targets,
                        const std::vector<bool>& mask) {
  if (targets.size() != mask.size() || int(targets.size()) != int(dist.logits.rows()))
    throw std::invalid_argument("cdcd_loss: shape mismatch");
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto row = dist.logits.row(Eigen::Index(i));
    double mx = row.maxCoeff();
    double lse = std::log((row.array() - mx).exp().sum()) + mx;
    total += lse - row(targets[i]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cdcd_loss: empty mask");
  return total / double(count);
}

namespace detail {

/// dlogits for the masked-mean cross-entropy: (softmax - onehot)/n_masked on
/// masked rows, zero elsewhere.
inline Mat cdcd_loss_grad(const TokenDistribution& dist, const TokenSeq& targets,
                          const std::vector<bool>& mask) {
  int n_masked = 0;
  for (bool b : mask)
    if (b) ++n_masked;
  Mat d = Mat::Zero(dist.probs.rows(), dist.probs.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    d.row(Eigen::Index(i)) = dist.probs.row(Eigen::Index(i)) / double(n_masked);
    d(Eigen::Index(i), targets[i]) -= 1.0 / double(n_masked);
  }
  return d;
}

}  // namespace detail

struct TrainState {
  std::int64_t step = 0;
  DenoiserModel model;
  TimeWarpCDF warp;
  Adam adam;
  double loss_ema = -1.0;
};

inline TrainState init_train_state(const TrainConfig& cfg, int vocab) {
  TrainState st;
  Rng rng = Rng::derive(cfg.seed, 0x696e6974u);
  st.model.net = init_net(cfg.net_config(vocab), rng);
  st.model.table = random_embedding_table(vocab, cfg.d, rng);
  normalize_embeddings(st.model.table);
  st.warp = make_time_warp(cfg.t_max, cfg.warp_bins);
  return st;
}

struct StepStats {
  double loss = 0.0;
  double lr = 0.0;
  double mean_t = 0.0;
};

/// Time used for a training example. Warped sampling draws from the fitted
/// CDF; otherwise uniform over (0, t_max].
inline double sample_train_time(const TrainConfig& cfg, const TimeWarpCDF& warp, Rng& rng) {
  double u = rng.uniform();
  double t = cfg.time_warping ? warp_sample(warp, u) : cfg.t_max * (1.0 - u);
  return std::max(t, 1e-3 * cfg.t_max);
}

/// One CDCD optimization step over a batch. Throws without touching the
/// state if the loss or gradients go non-finite.
inline StepStats train_step(TrainState& st, const CorpusBatch& batch, const TrainConfig& cfg) {
  int B = batch.batch_size();
  if (B == 0) throw std::invalid_argument("empty batch");
  int workers = std::min(max_threads(), B);
  std::vector<DenoiserModel> wgrads;
  std::vector<double> wloss(std::size_t(workers), 0.0), wt(std::size_t(workers), 0.0);
  std::vector<std::vector<std::pair<double, double>>> wwarp;
  wwarp.resize(std::size_t(workers));
  for (int w = 0; w < workers; ++w) wgrads.push_back(zeros_like(st.model));

  parallel_for(B, [&](int begin, int end, int w) {
    for (int b = begin; b < end; ++b) {
      const TokenSeq& targets = batch.sequences[std::size_t(b)];
      std::uint64_t ex_seed = Rng::mix(Rng::mix(cfg.seed, std::uint64_t(st.step)), std::uint64_t(b));
      Rng rng(ex_seed);
      double t = sample_train_time(cfg, st.warp, rng);
      auto mask = sample_mask(cfg.mask_spec, cfg.seq_len, ex_seed).mask;
      Mat clean = embed(targets, st.model.table);
      NoisyState state = add_noise(clean, mask, t, ex_seed);

      detail::NetCache cache;
      TokenDistribution dist =
          distribution_from_logits(net_forward(st.model.net, state.X, t, cache));
      double loss = cdcd_loss(dist, targets, mask);
      Mat dlogits = detail::cdcd_loss_grad(dist, targets, mask);
      Mat dX = net_backward(st.model.net, cache, dlogits, wgrads[std::size_t(w)].net);
      for (std::size_t i = 0; i < targets.size(); ++i)
        wgrads[std::size_t(w)].table.matrix.row(targets[i]) += dX.row(Eigen::Index(i));

      wloss[std::size_t(w)] += loss;
      wt[std::size_t(w)] += t;
      wwarp[std::size_t(w)].emplace_back(t, loss);
    }
  });

  DenoiserModel grads = std::move(wgrads[0]);
  for (int w = 1; w < workers; ++w) accumulate(grads, wgrads[std::size_t(w)]);
  for_each_tensor(grads, [&](const std::string&, Mat& m) { m /= double(B); });

  double loss = 0.0, mean_t = 0.0;
  for (int w = 0; w < workers; ++w) loss += wloss[std::size_t(w)], mean_t += wt[std::size_t(w)];
  loss /= double(B);
  mean_t /= double(B);

  bool finite = std::isfinite(loss);
  for_each_tensor(grads, [&](const std::string&, Mat& m) { finite = finite && m.allFinite(); });
  if (!finite) throw std::runtime_error("non-finite loss or gradient at step " +
                                        std::to_string(st.step));

  Adam::clip_global_norm(grads, cfg.grad_clip);
  double lr = cosine_warmup_lr(cfg.lr, st.step, cfg.warmup_steps, cfg.steps);
  st.adam.step(st.model, grads, lr);
  normalize_embeddings(st.model.table);
  for (int w = 0; w < workers; ++w)
    for (auto& [t, l] : wwarp[std::size_t(w)]) warp_update(st.warp, t, l, cfg.warp_ema_rate);
  st.loss_ema = st.loss_ema < 0.0 ? loss : 0.99 * st.loss_ema + 0.01 * loss;
  ++st.step;
  return {loss, lr, mean_t};
}

// ---- checkpointing ----

inline void save_denoiser_checkpoint(const std::string& path, const TrainState& st,
                                     nlohmann::json extra = {}) {
  TensorArchive a;
  a.config = std::move(extra);
  a.config["kind"] = "denoiser";
  a.config["step"] = st.step;
  a.config["loss_ema"] = st.loss_ema;
  a.config["net"] = {{"vocab", st.model.net.cfg.vocab},   {"d_in", st.model.net.cfg.d_in},
                     {"d_model", st.model.net.cfg.d_model}, {"n_heads", st.model.net.cfg.n_heads},
                     {"n_layers", st.model.net.cfg.n_layers}, {"seq_len", st.model.net.cfg.seq_len},
                     {"causal", st.model.net.cfg.causal}};
  for_each_tensor(const_cast<DenoiserModel&>(st.model),
                  [&](const std::string& n, Mat& m) { a.add(n, m); });
  Mat knots(1, Eigen::Index(st.warp.knots.size()));
  for (std::size_t i = 0; i < st.warp.knots.size(); ++i) knots(0, Eigen::Index(i)) = st.warp.knots[i];
  Mat weights(1, Eigen::Index(st.warp.weights.size()));
  for (std::size_t i = 0; i < st.warp.weights.size(); ++i)
    weights(0, Eigen::Index(i)) = st.warp.weights[i];
  a.add("warp.knots", knots);
  a.add("warp.weights", weights);
  a.config["adam_step"] = st.adam.step_count();
  for (auto& [name, m] : const_cast<Adam&>(st.adam).moments1()) a.add("adam.m." + name, m);
  for (auto& [name, m] : const_cast<Adam&>(st.adam).moments2()) a.add("adam.v." + name, m);
  a.save(path);
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig cfg;
  cfg.vocab = j.at("vocab");
  cfg.d_in = j.at("d_in");
  cfg.d_model = j.at("d_model");
  cfg.n_heads = j.at("n_heads");
  cfg.n_layers = j.at("n_layers");
  cfg.seq_len = j.at("seq_len");
  cfg.causal = j.at("causal");
  return cfg;
}

struct LoadedDenoiser {
  TrainState state;
  nlohmann::json config;
};

inline LoadedDenoiser load_denoiser_checkpoint(const std::string& path) {
  TensorArchive a = TensorArchive::load(path);
  if (a.config.value("kind", "") != "denoiser")
    throw std::runtime_error("checkpoint is not a denoiser: " + path);
  LoadedDenoiser out;
  out.config = a.config;
  NetConfig cfg = net_config_from_json(a.config.at("net"));
  Rng rng(1);
  out.state.model.net = init_net(cfg, rng);
  out.state.model.table.matrix = a.get("embedding");
  for_each_tensor(out.state.model.net, [&](const std::string& n, Mat& m) { m = a.get(n); });
  const Mat& knots = a.get("warp.knots");
  const Mat& weights = a.get("warp.weights");
  out.state.warp.knots.assign(knots.data(), knots.data() + knots.size());
  out.state.warp.weights.assign(weights.data(), weights.data() + weights.size());
  out.state.step = a.config.value("step", 0);
  out.state.loss_ema = a.config.value("loss_ema", -1.0);
  out.state.adam.set_step_count(a.config.value("adam_step", std::int64_t(0)));
  for_each_tensor(out.state.model, [&](const std::string& n, Mat&) {
    if (a.has("adam.m." + n)) out.state.adam.moments1()[n] = a.get("adam.m." + n);
    if (a.has("adam.v." + n)) out.state.adam.moments2()[n] = a.get("adam.v." + n);
  });
  return out;
}

// ---- full training loops ----

struct TrainResult {
  std::string final_checkpoint;
  std::vector<StepStats> log;
};

/// Pre-training loop: periodic checkpoints plus train_log.csv in run_dir.
inline TrainResult train(const TrainConfig& cfg, const BatchStream& stream,
                         const std::string& run_dir, int vocab_size,
                         nlohmann::json config_snapshot = {},
                         const std::function<void(std::int64_t, const StepStats&)>& on_step = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(run_dir) / "checkpoints");
  TrainState st = init_train_state(cfg, vocab_size);

  std::ostringstream log_csv;
  log_csv << "step,loss,lr,mean_t\n";
  TrainResult res;
  for (std::int64_t s = 0; s < cfg.steps; ++s) {
    StepStats stats = train_step(st, stream.batch(s), cfg);
    log_csv << s << ',' << std::setprecision(10) << stats.loss << ',' << stats.lr << ','
            << stats.mean_t << '\n';
    res.log.push_back(stats);
    if (on_step) on_step(s, stats);
    if (cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0 && s + 1 < cfg.steps)
      save_denoiser_checkpoint(
          (fs::path(run_dir) / "checkpoints" / ("step_" + std::to_string(s + 1) + ".ckpt")).string(),
          st, config_snapshot);
  }
  res.final_checkpoint =
      (fs::path(run_dir) / "checkpoints" / ("step_" + std::to_string(st.step) + ".ckpt")).string();
  save_denoiser_checkpoint(res.final_checkpoint, st, config_snapshot);
  atomic_write_file((fs::path(run_dir) / "train_log.csv").string(), log_csv.str());
  return res;
}

// ---- autoregressive reference model ----

struct ARTrainState {
  std::int64_t step = 0;
  ARModel model;
  Adam adam;
  double loss_ema = -1.0;
};

/// Causal next-token cross-entropy over all positions.
inline double ar_loss_and_grad(const ARModel& m, const TokenSeq& targets, Mat* dlogits_out,
                               detail::NetCache& cache) {
  Mat logits = net_forward(m.net, ar_input_rows(m, targets), ARModel::kFixedTime, cache);
  int L = int(targets.size());
  int n_pred = L - 1;
  Mat probs = softmax_rows(logits);
  double total = 0.0;
  Mat d = Mat::Zero(logits.rows(), logits.cols());
  for (int i = 0; i + 1 < L; ++i) {
    const auto row = logits.row(i);
    double mx = row.maxCoeff();
    double lse = std::log((row.array() - mx).exp().sum()) + mx;
    total += lse - row(targets[std::size_t(i + 1)]);
    d.row(i) = probs.row(i) / double(n_pred);
    d(i, targets[std::size_t(i + 1)]) -= 1.0 / double(n_pred);
  }
  if (dlogits_out) *dlogits_out = std::move(d);
  return total / double(n_pred);
}

inline double ar_train_step(ARTrainState& st, const CorpusBatch& batch, const TrainConfig& cfg) {
  int B = batch.batch_size();
  if (B == 0) throw std::invalid_argument("empty batch");
  int workers = std::min(max_threads(), B);
  std::vector<ARModel> wgrads;
  std::vector<double> wloss(std::size_t(workers), 0.0);
  for (int w = 0; w < workers; ++w) wgrads.push_back(zeros_like(st.model));

  parallel_for(B, [&](int begin, int end, int w) {
    for (int b = begin; b < end; ++b) {
      const TokenSeq& targets = batch.sequences[std::size_t(b)];
      detail::NetCache cache;
      Mat dlogits;
      wloss[std::size_t(w)] += ar_loss_and_grad(st.model, targets, &dlogits, cache);
      Mat dX = net_backward(st.model.net, cache, dlogits, wgrads[std::size_t(w)].net);
      for (std::size_t i = 0; i < targets.size(); ++i)
        wgrads[std::size_t(w)].embedding.row(targets[i]) += dX.row(Eigen::Index(i));
    }
  });

  ARModel grads = std::move(wgrads[0]);
  for (int w = 1; w < workers; ++w) accumulate(grads, wgrads[std::size_t(w)]);
  for_each_tensor(grads, [&](const std::string&, Mat& m) { m /= double(B); });
  double loss = 0.0;
  for (double l : wloss) loss += l;
  loss /= double(B);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite AR loss");
  Adam::clip_global_norm(grads, cfg.grad_clip);
  double lr = cosine_warmup_lr(cfg.lr, st.step, cfg.warmup_steps, cfg.steps);
  st.adam.step(st.model, grads, lr);
  st.loss_ema = st.loss_ema < 0.0 ? loss : 0.99 * st.loss_ema + 0.01 * loss;
  ++st.step;
  return loss;
}

inline void save_ar_checkpoint(const std::string& path, const ARTrainState& st,
                               nlohmann::json extra = {}) {
  TensorArchive a;
  a.config = std::move(extra);
  a.config["kind"] = "ar";
  a.config["step"] = st.step;
  a.config["net"] = {{"vocab", st.model.net.cfg.vocab},     {"d_in", st.model.net.cfg.d_in},
                     {"d_model", st.model.net.cfg.d_model}, {"n_heads", st.model.net.cfg.n_heads},
                     {"n_layers", st.model.net.cfg.n_layers}, {"seq_len", st.model.net.cfg.seq_len},
                     {"causal", st.model.net.cfg.causal}};
  for_each_tensor(const_cast<ARModel&>(st.model), [&](const std::string& n, Mat& m) { a.add(n, m); });
  a.save(path);
}

inline ARModel load_ar_checkpoint(const std::string& path) {
  TensorArchive a = TensorArchive::load(path);
  if (a.config.value("kind", "") != "ar") throw std::runtime_error("checkpoint is not an AR model");
  NetConfig cfg = net_config_from_json(a.config.at("net"));
  Rng rng(1);
  ARModel m;
  m.net = init_net(cfg, rng);
  m.embedding = a.get("embedding");
  for_each_tensor(m.net, [&](const std::string& n, Mat& mat) { mat = a.get(n); });
  return m;
}

/// Train the causal reference model on the same corpus.
inline ARTrainState train_ar_reference(const TrainConfig& cfg, const BatchStream& stream,
                                       int vocab_size,
                                       const std::function<void(std::int64_t, double)>& on_step = {}) {
  ARTrainState st;
  Rng rng = Rng::derive(cfg.seed, 0x61722d72u);
  NetConfig ncfg = cfg.net_config(vocab_size);
  st.model = init_ar_model(ncfg, rng);
  for (std::int64_t s = 0; s < cfg.steps; ++s) {
    double loss = ar_train_step(st, stream.batch(s), cfg);
    if (on_step) on_step(s, loss);
  }
  return st;
}

}  // namespace ddlm
