#pragma once

#include "ddlm/common.hpp"

namespace ddlm {

enum class GridKind { Linear, Geometric };

/// Decreasing time grid t_0 > t_1 > ... > t_n for the reverse process.
struct NoiseSchedule {
  double t_max = 10.0;
  double t_min = 0.1;
  int n_steps = 200;
  std::vector<double> grid;  // size n_steps + 1, grid[0] == start, back() == t_min
};

/// grid[0] = t_max * noise_scale (clamped above t_min to keep the score
/// finite), grid[n] = t_min.
inline NoiseSchedule make_grid(double t_max, double t_min, int n_steps, GridKind kind = GridKind::Linear,
                               double noise_scale = 1.0) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (!(t_max > t_min) || !(t_min > 0.0)) throw std::invalid_argument("need t_max > t_min > 0");
  if (noise_scale < 0.0) throw std::invalid_argument("noise_scale must be >= 0");
  double start = std::max(t_max * noise_scale, t_min * (1.0 + 1e-9));
  NoiseSchedule s{t_max, t_min, n_steps, {}};
  s.grid.resize(std::size_t(n_steps) + 1);
  for (int i = 0; i <= n_steps; ++i) {
    double a = double(i) / double(n_steps);
    if (kind == GridKind::Linear)
      s.grid[std::size_t(i)] = start + a * (t_min - start);
    else
      s.grid[std::size_t(i)] = start * std::pow(t_min / start, a);
  }
  s.grid.back() = t_min;
  return s;
}

/// Piecewise-linear unnormalized CDF over uniform knots. weights[i] is the
/// density mass on [knots[i], knots[i+1]).
struct TimeWarpCDF {
  std::vector<double> knots;    // increasing, knots.front() == 0, back() == t_max
  std::vector<double> weights;  // size knots.size() - 1, all >= 0
};

inline TimeWarpCDF make_time_warp(double t_max, int n_bins = 32) {
  if (n_bins < 1) throw std::invalid_argument("need at least one bin");
  TimeWarpCDF cdf;
  cdf.knots.resize(std::size_t(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) cdf.knots[std::size_t(i)] = t_max * double(i) / double(n_bins);
  cdf.weights.assign(std::size_t(n_bins), 1.0);
  return cdf;
}

/// Inverse-CDF sampling: u in [0,1) -> t. Uniform weights give t = u * t_max.
inline double warp_sample(const TimeWarpCDF& cdf, double u) {
  if (cdf.knots.size() < 2 || cdf.weights.size() + 1 != cdf.knots.size())
    throw std::invalid_argument("malformed time-warp CDF");
  if (u < 0.0 || u >= 1.0) throw std::invalid_argument("u must be in [0,1)");
  double raw_total = 0.0;
  for (double w : cdf.weights) {
    if (w < 0.0) throw std::invalid_argument("negative warp weight");
    raw_total += w;
  }
  if (raw_total <= 0.0) throw std::invalid_argument("zero-mass warp CDF");
  // Floor each bin at 0.5% of the total mass so low-loss time regions never
  // starve completely; bins already above the floor are unchanged.
  const double floor = 0.005 * raw_total;
  auto mass = [&](std::size_t i) { return std::max(cdf.weights[i], floor); };
  double total = 0.0;
  for (std::size_t i = 0; i < cdf.weights.size(); ++i) total += mass(i);
  double target = u * total, acc = 0.0;
  for (std::size_t i = 0; i < cdf.weights.size(); ++i) {
    if (target < acc + mass(i) || i + 1 == cdf.weights.size()) {
      double frac = (target - acc) / mass(i);
      frac = std::clamp(frac, 0.0, 1.0);
      return cdf.knots[i] + frac * (cdf.knots[i + 1] - cdf.knots[i]);
    }
    acc += mass(i);
  }
  return cdf.knots.back();
}

inline std::size_t warp_bin_of(const TimeWarpCDF& cdf, double t) {
  double t_max = cdf.knots.back();
  double span = t_max - cdf.knots.front();
  auto bin = std::size_t(std::clamp(
      (t - cdf.knots.front()) / span * double(cdf.weights.size()), 0.0,
      double(cdf.weights.size()) - 1.0));
  return bin;
}

/// EMA-fit one bin's mass toward the loss observed at time t. The fitted
/// density tracks the loss-vs-time profile, so warped sampling concentrates
/// where the loss is still high.
inline void warp_update(TimeWarpCDF& cdf, double t, double observed_loss, double ema_rate) {
  constexpr double kMinWeight = 1e-6;
  std::size_t bin = warp_bin_of(cdf, t);
  double& w = cdf.weights[bin];
  w = (1.0 - ema_rate) * w + ema_rate * observed_loss;
  if (w < kMinWeight) w = kMinWeight;
}

}  // namespace ddlm
