#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "is2r/bgs.hpp"

using namespace is2r;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

PerturbationBatch pair_batch(const std::vector<std::pair<double, double>>& rewards, std::size_t dim = 3) {
  PerturbationBatch b;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    std::vector<double> d(dim, 0.0);
    d[i % dim] = 1.0;
    b.directions.push_back(d);
    b.rewards_plus.push_back({rewards[i].first});
    b.rewards_minus.push_back({rewards[i].second});
  }
  return b;
}

PerturbationBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  PerturbationBatch b;
  b.directions = sample_orthogonal_directions(dim, n, rng());
  b.rewards_plus.assign(n, std::vector<double>(m));
  b.rewards_minus.assign(n, std::vector<double>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      b.rewards_plus[i][j] = 3.0 * g(rng);
      b.rewards_minus[i][j] = 3.0 * g(rng);
    }
  return b;
}

// Update recomputed from the formula with nothing shared with the library.
std::vector<double> oracle_update(const std::vector<double>& theta, const PerturbationBatch& b, EliteRule rule,
                                  std::size_t k, double alpha) {
  const std::size_t n = b.directions.size();
  std::vector<double> mp(n), mm(n);
  for (std::size_t i = 0; i < n; ++i) {
    mp[i] = std::accumulate(b.rewards_plus[i].begin(), b.rewards_plus[i].end(), 0.0) / b.rewards_plus[i].size();
    mm[i] = std::accumulate(b.rewards_minus[i].begin(), b.rewards_minus[i].end(), 0.0) / b.rewards_minus[i].size();
  }
  std::vector<std::size_t> elites;
  std::vector<bool> taken(n, false);
  for (std::size_t e = 0; e < k; ++e) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double s = rule == EliteRule::kBGS ? mp[i] - mm[i] : std::max(mp[i], mm[i]);
      const double sb = best == n ? 0.0 : (rule == EliteRule::kBGS ? mp[best] - mm[best] : std::max(mp[best], mm[best]));
      if (best == n || s > sb) best = i;
    }
    taken[best] = true;
    elites.push_back(best);
  }
  double mean = 0.0;
  for (std::size_t i : elites) mean += mp[i] + mm[i];
  mean /= 2.0 * k;
  double var = 0.0;
  for (std::size_t i : elites) var += (mp[i] - mean) * (mp[i] - mean) + (mm[i] - mean) * (mm[i] - mean);
  const double sr = std::sqrt(var / (2.0 * k));
  std::vector<double> out = theta;
  for (std::size_t i : elites)
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += alpha / sr * (mp[i] - mm[i]) * b.directions[i][p];
  return out;
}

}  // namespace

TEST(Directions, OrthogonalSingleBlock) {
  const auto d = sample_orthogonal_directions(10, 10, 7);
  ASSERT_EQ(d.size(), 10u);
  int pairs = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j, ++pairs) EXPECT_NEAR(dot(d[i], d[j]), 0.0, 1e-9);
  EXPECT_EQ(pairs, 45);
}

TEST(Directions, BlocksOfFiveFiveTwo) {
  const auto d = sample_orthogonal_directions(5, 12, 8);
  ASSERT_EQ(d.size(), 12u);
  const auto block = [](std::size_t i) { return i / 5; };
  double cross = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (block(i) == block(j))
        EXPECT_NEAR(dot(d[i], d[j]), 0.0, 1e-9) << i << "," << j;
      else
        cross = std::max(cross, std::abs(dot(d[i], d[j])));
    }
  EXPECT_GT(cross, 1e-3);  // independent blocks are not mutually orthogonal
}

TEST(Directions, GaussianMarginals) {
  constexpr std::size_t dim = 976, n = 200, seeds = 50;
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  for (std::size_t s = 0; s < seeds; ++s)
    for (const auto& d : sample_orthogonal_directions(dim, n, 1000 + s))
      for (std::size_t p = 0; p < dim; ++p) {
        sum[p] += d[p];
        sq[p] += d[p] * d[p];
      }
  const double count = static_cast<double>(n * seeds);
  for (std::size_t p = 0; p < dim; ++p) {
    const double mean = sum[p] / count;
    const double var = sq[p] / count - mean * mean;
    EXPECT_LT(std::abs(mean), 0.05) << p;
    EXPECT_NEAR(var, 1.0, 0.10) << p;
  }
}

TEST(Directions, ReproducibleAndSeedDependent) {
  EXPECT_EQ(sample_orthogonal_directions(20, 30, 3), sample_orthogonal_directions(20, 30, 3));
  EXPECT_NE(sample_orthogonal_directions(20, 30, 3), sample_orthogonal_directions(20, 30, 4));
  EXPECT_THROW(sample_orthogonal_directions(0, 3, 1), ValidationError);
  EXPECT_THROW(sample_orthogonal_directions(3, 0, 1), ValidationError);
}

TEST(RankElites, BgsAndArsDiverge) {
  const auto b = pair_batch({{10.0, 1.0}, {12.0, 11.0}});
  EXPECT_EQ(rank_elites(b, EliteRule::kBGS, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(rank_elites(b, EliteRule::kARS, 2), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(rank_elites(b, EliteRule::kBGS, 1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(rank_elites(b, EliteRule::kARS, 1), (std::vector<std::size_t>{1}));
}

TEST(RankElites, TiesKeepInputOrder) {
  const auto b = pair_batch({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}, 4);
  const std::vector<std::size_t> order{0, 1, 2, 3};
  EXPECT_EQ(rank_elites(b, EliteRule::kBGS, 4), order);
  EXPECT_EQ(rank_elites(b, EliteRule::kARS, 4), order);
}

TEST(RankElites, UsesRepeatMeans) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_batch(rng, 12, 3, 4);
    std::vector<double> diff(12), mx(12);
    for (std::size_t i = 0; i < 12; ++i) {
      const double p = (b.rewards_plus[i][0] + b.rewards_plus[i][1] + b.rewards_plus[i][2]) / 3.0;
      const double m = (b.rewards_minus[i][0] + b.rewards_minus[i][1] + b.rewards_minus[i][2]) / 3.0;
      diff[i] = p - m;
      mx[i] = std::max(p, m);
    }
    for (auto [rule, score] : {std::pair{EliteRule::kBGS, &diff}, std::pair{EliteRule::kARS, &mx}}) {
      const auto e = rank_elites(b, rule, 12);
      for (std::size_t r = 0; r + 1 < e.size(); ++r) EXPECT_GE((*score)[e[r]], (*score)[e[r + 1]]);
      auto sorted = e;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(sorted[i], i);
    }
  }
}

TEST(RankElites, AgreeWhenMinusRewardIsCommonConstant) {
  // With every R- equal to c and every R+ above c, max(R+, R-) = R+ and the
  // difference is R+ - c, so both rules order by R+.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = u(rng) - 5.0;
    std::vector<std::pair<double, double>> r;
    for (int i = 0; i < 15; ++i) r.emplace_back(c + 1e-3 + u(rng), c);
    const auto b = pair_batch(r);
    EXPECT_EQ(rank_elites(b, EliteRule::kBGS, 15), rank_elites(b, EliteRule::kARS, 15));
  }
}

TEST(RankElites, KAboveNRejected) {
  EXPECT_THROW(rank_elites(pair_batch({{1.0, 0.0}}), EliteRule::kBGS, 2), ValidationError);
}

TEST(EliteCount, CeilingOfFraction) {
  EXPECT_EQ(elite_count(0.30, 200), 60u);
  EXPECT_EQ(elite_count(0.60, 5), 3u);
  EXPECT_EQ(elite_count(0.30, 10), 3u);  // 0.3 * 10 is 3.0000000000000004 in binary
  EXPECT_EQ(elite_count(0.30, 32), 10u);
  EXPECT_EQ(elite_count(1.0, 7), 7u);
  EXPECT_EQ(elite_count(0.01, 7), 1u);
}

TEST(ApplyUpdate, HandExample) {
  PerturbationBatch b;
  b.directions = {{1.0, 0.0, 0.0}};
  b.rewards_plus = {{2.0}};
  b.rewards_minus = {{0.0}};
  ESConfig cfg;
  cfg.step_size = 0.1;
  const std::vector<double> theta{0.5, -1.0, 2.0};
  const auto [next, rep] = apply_update(theta, b, {0}, cfg);
  EXPECT_NEAR(rep.reward_std, 1.0, 1e-15);
  EXPECT_NEAR(next[0], 0.7, 1e-15);
  EXPECT_EQ(next[1], -1.0);
  EXPECT_EQ(next[2], 2.0);
  EXPECT_FALSE(rep.skipped);
}

TEST(ApplyUpdate, ZeroDifferencesLeaveParamsUnchanged) {
  const auto b = pair_batch({{1.0, 1.0}, {3.0, 3.0}, {-2.0, -2.0}});
  const std::vector<double> theta{1.0, 2.0, 3.0};
  const auto [next, rep] = apply_update(theta, b, {0, 1, 2}, ESConfig{});
  EXPECT_EQ(next, theta);
}

TEST(ApplyUpdate, ZeroRewardStdSkips) {
  const auto b = pair_batch({{1.0, 1.0}, {1.0, 1.0}});
  const std::vector<double> theta{1.0, 2.0, 3.0};
  const auto [next, rep] = apply_update(theta, b, {0, 1}, ESConfig{});
  EXPECT_TRUE(rep.skipped);
  EXPECT_FALSE(rep.diagnostic.empty());
  EXPECT_EQ(next, theta);
  EXPECT_THROW(apply_update(theta, b, {}, ESConfig{}), ValidationError);
}

TEST(ApplyUpdate, SwappingSignsNegatesStep) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_batch(rng, 8, 2, 6);
    const std::vector<double> theta(6, 0.25);
    const std::vector<std::size_t> elites{0, 3, 5};
    const auto [a, ra] = apply_update(theta, b, elites, ESConfig{});
    std::swap(b.rewards_plus, b.rewards_minus);
    const auto [c, rc] = apply_update(theta, b, elites, ESConfig{});
    for (std::size_t p = 0; p < 6; ++p) EXPECT_NEAR(a[p] - theta[p], -(c[p] - theta[p]), 1e-12);
  }
}

TEST(ApplyUpdate, RelabelingDirectionsIsEquivariant) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_batch(rng, 8, 2, 6);
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    PerturbationBatch pb;
    for (std::size_t i : perm) {
      pb.directions.push_back(b.directions[i]);
      pb.rewards_plus.push_back(b.rewards_plus[i]);
      pb.rewards_minus.push_back(b.rewards_minus[i]);
    }
    const std::vector<double> theta(6, -0.5);
    const auto e = rank_elites(b, EliteRule::kBGS, 3);
    std::vector<std::size_t> pe;
    for (std::size_t i : e) pe.push_back(static_cast<std::size_t>(std::find(perm.begin(), perm.end(), i) - perm.begin()));
    const auto [a, ra] = apply_update(theta, b, e, ESConfig{});
    const auto [c, rc] = apply_update(theta, pb, pe, ESConfig{});
    for (std::size_t p = 0; p < 6; ++p) EXPECT_NEAR(a[p], c[p], 1e-12);
  }
}

TEST(ApplyUpdate, MatchesBruteForceOracle) {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<std::size_t> nd(1, 30), md(1, 5);
  std::uniform_real_distribution<double> frac(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = nd(rng), m = md(rng), dim = 12;
    const auto b = random_batch(rng, n, m, dim);
    ESConfig cfg;
    cfg.step_size = 0.01;
    cfg.elite_fraction = frac(rng);
    const EliteRule rule = trial % 2 ? EliteRule::kARS : EliteRule::kBGS;
    const std::size_t k = elite_count(cfg.elite_fraction, n);
    std::vector<double> theta(dim);
    for (auto& v : theta) v = std::normal_distribution<double>(0.0, 1.0)(rng);
    const auto [next, rep] = apply_update(theta, b, rank_elites(b, rule, k), cfg);
    const auto want = oracle_update(theta, b, rule, k, cfg.step_size);
    for (std::size_t p = 0; p < dim; ++p) EXPECT_NEAR(next[p], want[p], 1e-12) << trial;
  }
}

TEST(ApplyUpdate, AllMeansScopeUsesEveryDirection) {
  const auto b = pair_batch({{4.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}, 4);
  ESConfig cfg;
  cfg.step_size = 1.0;
  cfg.reward_std_scope = RewardStdScope::kAllMeans;
  const auto [next, rep] = apply_update(std::vector<double>(4, 0.0), b, {0}, cfg);
  // Eight means {4, 0 x 7}: mean 0.5, population std sqrt(1.75).
  EXPECT_NEAR(rep.reward_std, std::sqrt(1.75), 1e-14);
  EXPECT_NEAR(next[0], 4.0 / std::sqrt(1.75), 1e-12);
}

TEST(TrainStep, SingleDirectionReproducesHandUpdate) {
  const std::vector<double> theta{0.1, -0.2, 0.3, 0.0};
  ESConfig cfg;
  cfg.num_perturbations = 1;
  cfg.rollouts_per_perturbation = 1;
  cfg.step_size = 0.1;
  cfg.use_obs_normalization = false;
  // Reward 2 on the plus side and 0 on the minus side: sigma_R = 1.
  const RolloutFn rollout = [&](std::span<const double> p, const Normalizer&, std::uint64_t, Normalizer&) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - theta[i]) * (p[i] - theta[i]);
    return p[0] - theta[0] > 0.0 || (p[0] == theta[0] && s == 0.0) ? 2.0 : 0.0;
  };
  const auto r = train_step(theta, Normalizer{}, rollout, cfg, 99);
  const auto& d = r.batch.directions[0];
  const double sign = d[0] > 0.0 ? 1.0 : -1.0;
  for (std::size_t p = 0; p < theta.size(); ++p) EXPECT_NEAR(r.params[p], theta[p] + sign * 0.2 * d[p], 1e-15);
}

TEST(TrainStep, SymmetricRewardsLeaveParamsUnchanged) {
  ESConfig cfg;
  cfg.num_perturbations = 6;
  cfg.rollouts_per_perturbation = 2;
  cfg.elite_fraction = 1.0;
  const std::vector<double> theta{1.0, 2.0, 3.0};
  // Even in the perturbation: R(theta + s d) = R(theta - s d).
  const RolloutFn rollout = [&](std::span<const double> p, const Normalizer&, std::uint64_t, Normalizer&) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - theta[i]) * (p[i] - theta[i]);
    return -s;
  };
  const auto r = train_step(theta, Normalizer{}, rollout, cfg, 5);
  for (std::size_t p = 0; p < 3; ++p) EXPECT_NEAR(r.params[p], theta[p], 1e-15);
}

TEST(TrainStep, ConvergesOnQuadratic) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> target(10), theta(10, 0.0);
  for (auto& v : target) v = g(rng);
  ESConfig cfg;
  cfg.num_perturbations = 20;
  cfg.rollouts_per_perturbation = 1;
  cfg.elite_fraction = 0.3;
  cfg.perturbation_std = 0.025;
  cfg.step_size = 0.01;
  const RolloutFn f = [&](std::span<const double> p, const Normalizer&, std::uint64_t, Normalizer&) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
    return -s;
  };
  const auto dist = [&](const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
    return std::sqrt(s);
  };
  const double d0 = dist(theta);
  for (std::uint64_t step = 0; step < 300; ++step) theta = train_step(theta, Normalizer{}, f, cfg, step).params;
  EXPECT_LT(dist(theta), 0.1 * d0);
}

namespace {

// Cosine between g and the i.i.d. update averaged over 50 seeds, N = 200.
double iid_alignment(std::size_t dim) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> grad(dim);
  for (auto& v : grad) v = g(rng);
  ESConfig cfg;
  cfg.num_perturbations = 200;
  cfg.rollouts_per_perturbation = 1;
  cfg.use_orthogonal = false;
  cfg.use_obs_normalization = false;
  cfg.threads = 4;
  const RolloutFn f = [&](std::span<const double> p, const Normalizer&, std::uint64_t, Normalizer&) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += grad[i] * p[i];
    return s;
  };
  const std::vector<double> theta(dim, 0.0);
  std::vector<double> mean_step(dim, 0.0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto r = train_step(theta, Normalizer{}, f, cfg, 500 + s);
    for (std::size_t i = 0; i < dim; ++i) mean_step[i] += r.params[i] / 50.0;
  }
  return dot(mean_step, grad) / std::sqrt(dot(mean_step, mean_step) * dot(grad, grad));
}

}  // namespace

TEST(TrainStep, IidEstimateAlignsWithLinearGradient) { EXPECT_GT(iid_alignment(100), 0.95); }

// The 3000 pooled elites each contribute z^2 along g and z times a (dim - 1)
// dimensional Gaussian across it, z being a top-30% standard normal with
// E[z^2] = 1 + a phi(a) / 0.3 = 1.607 (a = 0.524). The expected cosine is
// 1 / sqrt(1 + (dim - 1) / (3000 * 1.607)) = 0.912 at dim 976.
TEST(TrainStep, IidAlignmentAtPolicyDimensionMatchesTheory) { EXPECT_NEAR(iid_alignment(976), 0.912, 0.03); }

TEST(TrainStep, RunsExactlyTwoNmRolloutsAndAbsorbsFailures) {
  ESConfig cfg;
  cfg.num_perturbations = 7;
  cfg.rollouts_per_perturbation = 3;
  cfg.threads = 4;
  std::atomic<int> calls{0};
  const RolloutFn f = [&](std::span<const double> p, const Normalizer&, std::uint64_t seed, Normalizer&) -> double {
    ++calls;
    if (seed % 5 == 0) throw std::runtime_error("simulated fault");
    if (seed % 5 == 1) return std::numeric_limits<double>::quiet_NaN();
    return p[0];
  };
  const auto r = train_step(std::vector<double>(4, 0.0), Normalizer{}, f, cfg, 3);
  EXPECT_EQ(calls.load(), 42);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const std::uint64_t seed = derive_seed(3, i, 2, j);
      if (seed % 5 <= 1) {
        EXPECT_EQ(r.batch.rewards_plus[i][j], -2.0);
        EXPECT_EQ(r.batch.rewards_minus[i][j], -2.0);
      }
    }
}

TEST(TrainStep, CommonRandomNumbersSharePartnerSeeds) {
  for (bool crn : {true, false}) {
    ESConfig cfg;
    cfg.num_perturbations = 4;
    cfg.rollouts_per_perturbation = 2;
    cfg.common_random_numbers = crn;
    const RolloutFn f = [](std::span<const double>, const Normalizer&, std::uint64_t seed, Normalizer&) {
      return static_cast<double>(seed % 1000);
    };
    const auto r = train_step(std::vector<double>(3, 0.0), Normalizer{}, f, cfg, 8);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        EXPECT_EQ(r.batch.rewards_plus[i][j] == r.batch.rewards_minus[i][j], crn) << i << "," << j;
  }
}

TEST(TrainStep, DeterministicAcrossThreadCounts) {
  const RolloutFn f = [](std::span<const double> p, const Normalizer&, std::uint64_t seed, Normalizer& stats) {
    ObservationRow row{};
    row[0] = p[0];
    row[1] = static_cast<double>(seed % 97);
    stats.update(row);
    double s = 0.0;
    for (double v : p) s -= (v - 0.3) * (v - 0.3);
    return s + 1e-3 * static_cast<double>(seed % 13);
  };
  ESConfig a;
  a.num_perturbations = 16;
  a.rollouts_per_perturbation = 2;
  a.threads = 1;
  ESConfig b = a;
  b.threads = 6;
  const std::vector<double> theta(9, 0.0);
  const auto ra = train_step(theta, Normalizer{}, f, a, 21);
  const auto rb = train_step(theta, Normalizer{}, f, b, 21);
  EXPECT_EQ(ra.params, rb.params);
  EXPECT_EQ(ra.report.elites, rb.report.elites);
  EXPECT_EQ(ra.report.reward_std, rb.report.reward_std);
  EXPECT_EQ(ra.normalizer.mean, rb.normalizer.mean);
  EXPECT_EQ(ra.normalizer.m2, rb.normalizer.m2);
  EXPECT_EQ(ra.normalizer.count, 64.0);
}

TEST(ESConfig, ValidatesAndHasTablePresets) {
  ESConfig c;
  EXPECT_NO_THROW(c.validate());
  c.elite_fraction = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ESConfig{};
  c.perturbation_std = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  const auto r = ESConfig::real();
  EXPECT_EQ(r.num_perturbations, 5u);
  EXPECT_EQ(r.rollouts_per_perturbation, 3u);
  EXPECT_DOUBLE_EQ(r.elite_fraction, 0.6);
  const auto s = ESConfig::sim();
  EXPECT_EQ(s.num_perturbations, 200u);
  EXPECT_EQ(s.rollouts_per_perturbation, 15u);
  EXPECT_DOUBLE_EQ(s.step_size, 0.00375);
}
