#pragma once

// Blackbox Gradient Sensing: antithetic, orthogonally blocked perturbations,
// repeated rollouts per direction, elites ranked by reward difference.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "is2r/common.hpp"
#include "is2r/parallel.hpp"
#include "is2r/policy.hpp"

namespace is2r {

enum class EliteRule { kBGS, kARS };
enum class RewardStdScope { kEliteMeans, kAllMeans };

inline const char* to_string(EliteRule r) { return r == EliteRule::kBGS ? "bgs" : "ars"; }
inline const char* to_string(RewardStdScope s) { return s == RewardStdScope::kEliteMeans ? "elite" : "all"; }

struct ESConfig {
  double step_size = 0.00375;
  double perturbation_std = 0.025;
  std::size_t num_perturbations = 200;
  std::size_t rollouts_per_perturbation = 15;
  double elite_fraction = 0.30;
  std::size_t max_env_steps = 200;
  bool use_orthogonal = true;
  bool use_obs_normalization = true;
  EliteRule elite_rule = EliteRule::kBGS;
  RewardStdScope reward_std_scope = RewardStdScope::kEliteMeans;
  double failed_rollout_reward = -2.0;
  // Antithetic partners share their rollout seed, so both see the same throws
  // and noise. Off: the seed also depends on the sign.
  bool common_random_numbers = true;
  std::size_t threads = 1;

  static ESConfig sim() { return {}; }

  static ESConfig real() {
    ESConfig c;
    c.num_perturbations = 5;
    c.rollouts_per_perturbation = 3;
    c.elite_fraction = 0.60;
    return c;
  }

  void validate() const {
    if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw ValidationError("elite_fraction must be in (0,1]");
    if (num_perturbations < 1) throw ValidationError("num_perturbations must be >= 1");
    if (rollouts_per_perturbation < 1) throw ValidationError("rollouts_per_perturbation must be >= 1");
    if (!(perturbation_std > 0.0)) throw ValidationError("perturbation_std must be positive");
    if (!(step_size > 0.0)) throw ValidationError("step_size must be positive");
    if (max_env_steps < 1) throw ValidationError("max_env_steps must be >= 1");
  }
};

inline std::size_t elite_count(double fraction, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

// Directions in blocks of min(dim, remaining) columns: Gaussian matrix, QR,
// then each column rescaled to the norm of an independent Gaussian vector.
inline std::vector<std::vector<double>> sample_orthogonal_directions(std::size_t dim, std::size_t n, std::uint64_t seed,
                                                                     bool orthogonal = true) {
  if (dim < 1 || n < 1) throw ValidationError("sample_orthogonal_directions: dim and n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  if (!orthogonal) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> d(dim);
      for (auto& v : d) v = normal(rng);
      out.push_back(std::move(d));
    }
    return out;
  }
  while (out.size() < n) {
    const std::size_t block = std::min(dim, n - out.size());
    Eigen::MatrixXd g(dim, block);
    for (std::size_t c = 0; c < block; ++c)
      for (std::size_t r = 0; r < dim; ++r) g(r, c) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, block);
    const Eigen::MatrixXd rr = qr.matrixQR().topRows(block).template triangularView<Eigen::Upper>();
    for (std::size_t c = 0; c < block; ++c) {
      if (rr(c, c) < 0.0) q.col(c) *= -1.0;
      double norm2 = 0.0;
      for (std::size_t r = 0; r < dim; ++r) {
        const double z = normal(rng);
        norm2 += z * z;
      }
      std::vector<double> d(dim);
      const double scale = std::sqrt(norm2);
      for (std::size_t r = 0; r < dim; ++r) d[r] = scale * q(r, c);
      out.push_back(std::move(d));
    }
  }
  return out;
}

struct PerturbationBatch {
  std::vector<std::vector<double>> directions;
  std::vector<std::vector<double>> rewards_plus;   // [direction][repeat]
  std::vector<std::vector<double>> rewards_minus;
  std::uint64_t seed = 0;

  std::size_t size() const { return directions.size(); }

  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
  double mean_plus(std::size_t i) const { return mean(rewards_plus[i]); }
  double mean_minus(std::size_t i) const { return mean(rewards_minus[i]); }
};

inline std::vector<std::size_t> rank_elites(const PerturbationBatch& batch, EliteRule rule, std::size_t k) {
  const std::size_t n = batch.size();
  if (k > n) throw ValidationError("rank_elites: k exceeds number of directions");
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = batch.mean_plus(i), m = batch.mean_minus(i);
    score[i] = rule == EliteRule::kBGS ? p - m : std::max(p, m);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(k);
  return order;
}

struct UpdateReport {
  std::vector<std::size_t> elites;
  std::vector<double> mean_differences;  // per direction, all N
  double reward_std = 0.0;               // sigma^R
  std::vector<double> params;
  double mean_reward = 0.0;              // over all rollouts
  double max_reward = 0.0;
  double elite_mean_difference = 0.0;
  bool skipped = false;
  std::string diagnostic;
};

inline double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

inline std::pair<std::vector<double>, UpdateReport> apply_update(std::span<const double> params,
                                                                 const PerturbationBatch& batch,
                                                                 const std::vector<std::size_t>& elites,
                                                                 const ESConfig& config) {
  if (elites.empty()) throw ValidationError("apply_update: no elites");
  UpdateReport report;
  report.elites = elites;
  const std::size_t n = batch.size();
  report.mean_differences.resize(n);
  std::vector<double> means;
  for (std::size_t i = 0; i < n; ++i) report.mean_differences[i] = batch.mean_plus(i) - batch.mean_minus(i);

  if (config.reward_std_scope == RewardStdScope::kEliteMeans) {
    for (std::size_t i : elites) {
      means.push_back(batch.mean_plus(i));
      means.push_back(batch.mean_minus(i));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      means.push_back(batch.mean_plus(i));
      means.push_back(batch.mean_minus(i));
    }
  }
  report.reward_std = population_std(means);

  double total = 0.0, count = 0.0;
  report.max_reward = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (const auto* rs : {&batch.rewards_plus[i], &batch.rewards_minus[i]})
      for (double r : *rs) {
        total += r;
        count += 1.0;
        report.max_reward = std::max(report.max_reward, r);
      }
  report.mean_reward = count > 0.0 ? total / count : 0.0;
  double elite_diff = 0.0;
  for (std::size_t i : elites) elite_diff += report.mean_differences[i];
  report.elite_mean_difference = elite_diff / static_cast<double>(elites.size());

  std::vector<double> out(params.begin(), params.end());
  if (!(report.reward_std > 1e-12)) {
    report.skipped = true;
    report.diagnostic = "update skipped: reward standard deviation is zero";
    report.params = out;
    return {out, report};
  }
  const double scale = config.step_size / report.reward_std;
  for (std::size_t i : elites) {
    const double w = scale * report.mean_differences[i];
    const auto& d = batch.directions[i];
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += w * d[p];
  }
  report.params = out;
  return {out, report};
}

// A rollout maps (perturbed params, frozen normalizer, seed) to an episode
// return and may record observation statistics into `stats`.
using RolloutFn = std::function<double(std::span<const double>, const Normalizer&, std::uint64_t, Normalizer& stats)>;

struct TrainStepResult {
  std::vector<double> params;
  Normalizer normalizer;
  UpdateReport report;
  PerturbationBatch batch;
};

inline TrainStepResult train_step(std::span<const double> params, const Normalizer& norm, const RolloutFn& rollout,
                                  const ESConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t n = config.num_perturbations;
  const std::size_t m = config.rollouts_per_perturbation;
  const std::size_t dim = params.size();

  PerturbationBatch batch;
  batch.seed = seed;
  batch.directions = sample_orthogonal_directions(dim, n, derive_seed(seed, 0xD1), config.use_orthogonal);
  batch.rewards_plus.assign(n, std::vector<double>(m, 0.0));
  batch.rewards_minus.assign(n, std::vector<double>(m, 0.0));

  const std::size_t total = n * 2 * m;
  std::vector<Normalizer> stats(total);
  parallel_for(total, config.threads, [&](std::size_t idx) {
    const std::size_t i = idx / (2 * m);
    const std::size_t sign = (idx / m) % 2;  // 0: plus, 1: minus
    const std::size_t j = idx % m;
    std::vector<double> theta(params.begin(), params.end());
    const double s = sign == 0 ? config.perturbation_std : -config.perturbation_std;
    for (std::size_t p = 0; p < dim; ++p) theta[p] += s * batch.directions[i][p];
    double r;
    try {
      const std::uint64_t rollout_seed =
          config.common_random_numbers ? derive_seed(seed, i, 2, j) : derive_seed(seed, i, sign, j);
      r = rollout(theta, norm, rollout_seed, stats[idx]);
      if (!std::isfinite(r)) r = config.failed_rollout_reward;
    } catch (const std::exception&) {
      r = config.failed_rollout_reward;
      stats[idx] = Normalizer{};
    }
    (sign == 0 ? batch.rewards_plus : batch.rewards_minus)[i][j] = r;
  });

  const auto elites = rank_elites(batch, config.elite_rule, elite_count(config.elite_fraction, n));
  auto [next, report] = apply_update(params, batch, elites, config);
  Normalizer merged = norm;
  if (config.use_obs_normalization)
    for (const auto& s : stats) merged.merge(s);
  return {std::move(next), merged, std::move(report), std::move(batch)};
}

}  // namespace is2r
