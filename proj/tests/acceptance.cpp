// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on stderr.
// Usage: acceptance [--only N[,N...]] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "is2r/bgs.hpp"
#include "is2r/config.hpp"
#include "is2r/env.hpp"
#include "is2r/experiment.hpp"
#include "is2r/humanmodel.hpp"
#include "is2r/io.hpp"
#include "is2r/loop.hpp"
#include "is2r/policy.hpp"

using namespace is2r;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) { std::fprintf(stderr, "  .. %s\n", s.c_str()); }

fs::path g_work;

// Desk budget shared by every MDP-scale criterion.
constexpr std::size_t kDeskUpdates = 2000;
constexpr std::size_t kEvalEpisodes = 200;

// ---------------------------------------------------------------------------
// 1. Physics oracle

Verdict physics() {
  PhysicsConstants c;
  c.drag_coefficient = 0.0;
  const Vec3 p0{0.1, 1.5, 0.3}, v0{-0.5, -6.0, 4.0};
  BallState s;
  s.position = p0;
  s.velocity = v0;
  double worst = 0.0;
  for (int k = 1; k <= 1000; ++k) {
    s = step_ball(s, c, kControlDt);
    const double t = k * kControlDt;
    const Vec3 p = p0 + v0 * t + 0.5 * c.gravity() * t * t;
    const Vec3 v = v0 + c.gravity() * t;
    worst = std::max(worst, (s.position - p).norm() / std::max(1.0, p.norm()));
    worst = std::max(worst, (s.velocity - v).norm() / std::max(1.0, v.norm()));
  }
  // Drag alone never speeds the ball up, from many random starts.
  PhysicsConstants d;
  d.gravity_z = 0.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  bool monotone = true;
  for (int trial = 0; trial < 200; ++trial) {
    BallState b;
    b.velocity = {u(rng), u(rng), u(rng)};
    double prev = b.velocity.norm();
    for (int k = 0; k < 500; ++k) {
      b = step_ball(b, d, kControlDt);
      monotone &= b.velocity.norm() < prev;
      prev = b.velocity.norm();
    }
  }
  return {worst <= 1e-9 && monotone, fmt("max relative error %.2e over 1000 steps; drag monotone %s", worst,
                                         monotone ? "yes" : "no")};
}

// 2. Parameter count

Verdict param_count_check() {
  const std::size_t a = layer_param_count(0), b = layer_param_count(1), c = layer_param_count(2);
  std::size_t layout = 0;
  for (const auto& s : param_layout()) layout += s.size;
  const bool ok = param_count() == 976 && a == 368 && b == 408 && c == 200 && layout == 976;
  return {ok, fmt("%zu trainable scalars = %zu + %zu + %zu", param_count(), a, b, c)};
}

// 3. BGS vs ARS on the constructed pairs

Verdict elite_divergence() {
  PerturbationBatch b;
  b.directions = {{1.0}, {1.0}};
  b.rewards_plus = {{10.0}, {12.0}};
  b.rewards_minus = {{1.0}, {11.0}};
  const auto bgs = rank_elites(b, EliteRule::kBGS, 2);
  const auto ars = rank_elites(b, EliteRule::kARS, 2);
  return {bgs[0] == 0 && ars[0] == 1,
          fmt("BGS ranks direction %zu first, ARS ranks direction %zu first", bgs[0] + 1, ars[0] + 1)};
}

// 4. Update rule against a direct recomputation

std::vector<double> brute_force_update(const std::vector<double>& theta, const PerturbationBatch& b, EliteRule rule,
                                       std::size_t k, double alpha) {
  const std::size_t n = b.size();
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0, m = 0.0;
    for (double r : b.rewards_plus[i]) p += r;
    for (double r : b.rewards_minus[i]) m += r;
    p /= static_cast<double>(b.rewards_plus[i].size());
    m /= static_cast<double>(b.rewards_minus[i].size());
    keyed.push_back({rule == EliteRule::kBGS ? p - m : std::max(p, m), i});
  }
  // Descending by key, ties by index.
  std::sort(keyed.begin(), keyed.end(), [](auto& x, auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
  std::vector<double> means;
  std::vector<std::pair<std::size_t, double>> elite_diff;
  for (std::size_t e = 0; e < k; ++e) {
    const std::size_t i = keyed[e].second;
    double p = 0.0, m = 0.0;
    for (double r : b.rewards_plus[i]) p += r;
    for (double r : b.rewards_minus[i]) m += r;
    p /= static_cast<double>(b.rewards_plus[i].size());
    m /= static_cast<double>(b.rewards_minus[i].size());
    means.push_back(p);
    means.push_back(m);
    elite_diff.push_back({i, p - m});
  }
  double mu = 0.0;
  for (double v : means) mu += v;
  mu /= static_cast<double>(means.size());
  double var = 0.0;
  for (double v : means) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / static_cast<double>(means.size()));
  std::vector<double> out = theta;
  if (sigma <= 1e-12) return out;
  for (auto [i, d] : elite_diff)
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += alpha / sigma * d * b.directions[i][p];
  return out;
}

Verdict update_oracle() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim_d(1, 20), n_d(1, 8), m_d(1, 4);
  std::uniform_real_distribution<double> frac(0.1, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = dim_d(rng), n = n_d(rng), m = m_d(rng);
    PerturbationBatch b;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> d(dim), rp(m), rm(m);
      for (auto& v : d) v = g(rng);
      for (auto& v : rp) v = 3.0 * g(rng);
      for (auto& v : rm) v = 3.0 * g(rng);
      b.directions.push_back(d);
      b.rewards_plus.push_back(rp);
      b.rewards_minus.push_back(rm);
    }
    ESConfig cfg;
    cfg.step_size = 0.05;
    cfg.elite_fraction = frac(rng);
    const EliteRule rule = trial % 2 ? EliteRule::kARS : EliteRule::kBGS;
    const std::size_t k = elite_count(cfg.elite_fraction, n);
    std::vector<double> theta(dim);
    for (auto& v : theta) v = g(rng);
    const auto got = apply_update(theta, b, rank_elites(b, rule, k), cfg).first;
    const auto want = brute_force_update(theta, b, rule, k, cfg.step_size);
    for (std::size_t p = 0; p < dim; ++p) worst = std::max(worst, std::abs(got[p] - want[p]));
  }
  return {worst <= 1e-12, fmt("max abs deviation %.2e over 100 batches (dim<=20, N<=8)", worst)};
}

// 5. Orthogonality and marginals

Verdict directions_check() {
  double worst_dot = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t dim = 976, n = 200;
    const auto d = sample_orthogonal_directions(dim, n, seed);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (i / dim != j / dim) continue;
        double s = 0.0;
        for (std::size_t p = 0; p < dim; ++p) s += d[i][p] * d[j][p];
        worst_dot = std::max(worst_dot, std::abs(s));
      }
  }
  // 10^4 directions in dimension 976, 50 blocks of 200.
  const std::size_t dim = 976;
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (const auto& d : sample_orthogonal_directions(dim, 200, 1000 + seed)) {
      ++count;
      for (std::size_t p = 0; p < dim; ++p) {
        sum[p] += d[p];
        sq[p] += d[p] * d[p];
      }
    }
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t p = 0; p < dim; ++p) {
    const double mean = sum[p] / static_cast<double>(count);
    const double var = sq[p] / static_cast<double>(count) - mean * mean;
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
  }
  const bool ok = worst_dot <= 1e-9 && worst_mean <= 0.05 && worst_var <= 0.10;
  return {ok, fmt("max within-block |dot| %.2e; %zu directions: max |mean| %.4f, max |var-1| %.4f", worst_dot, count,
                  worst_mean, worst_var)};
}

// ---------------------------------------------------------------------------
// 6 and 7. Optimizer convergence, BGS vs ARS on the MDP

double quadratic_ratio(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> target(10), theta(10);
  for (auto& v : target) v = g(rng);
  for (auto& v : theta) v = g(rng);
  ESConfig cfg;
  cfg.num_perturbations = 20;
  cfg.rollouts_per_perturbation = 1;
  cfg.step_size = 0.01;
  cfg.use_obs_normalization = false;
  const auto dist = [&](std::span<const double> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
    return std::sqrt(s);
  };
  const RolloutFn f = [&](std::span<const double> p, const Normalizer&, std::uint64_t, Normalizer&) {
    const double d = dist(p);
    return -d * d;
  };
  const double d0 = dist(theta);
  for (std::uint64_t u = 0; u < 300; ++u) theta = train_step(theta, Normalizer{}, f, cfg, derive_seed(seed, u)).params;
  return dist(theta) / d0;
}

struct MdpRun {
  double mean_sparse = 0.0;
};

EnvConfig desk_sim_env() {
  EnvConfig e;
  e.rewards = RewardConfig::sim();
  return e;
}

MdpRun train_fixed(const BallDistribution& model, EliteRule rule, std::uint64_t seed) {
  ESConfig es = PhaseSchedule::desk_sim_es();
  es.elite_rule = rule;
  const auto t0 = std::chrono::steady_clock::now();
  const PolicyState p = train_sim(initial_policy(derive_seed(seed, 0x1417)), model, kDeskUpdates, es, desk_sim_env(),
                                  derive_seed(seed, 0x5100));
  const auto ev = evaluate_on_model(p, model, kEvalEpisodes, desk_sim_env(), derive_seed(seed, 0xE7A1));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  progress(fmt("%s seed %llu: mean sparse %.3f (%.0f s)", to_string(rule), static_cast<unsigned long long>(seed),
               ev.mean(), secs));
  return {ev.mean()};
}

std::map<EliteRule, std::vector<double>> g_mdp;

void run_mdp_pair() {
  if (!g_mdp.empty()) return;
  for (EliteRule rule : {EliteRule::kBGS, EliteRule::kARS})
    for (std::uint64_t seed = 1; seed <= 3; ++seed) g_mdp[rule].push_back(train_fixed(presets::narrow(), rule, seed).mean_sparse);
}

Verdict convergence() {
  int quad_ok = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double r = quadratic_ratio(seed);
    worst_ratio = std::max(worst_ratio, r);
    quad_ok += r < 0.1;
  }
  run_mdp_pair();
  const auto& bgs = g_mdp[EliteRule::kBGS];
  int mdp_ok = 0;
  for (double v : bgs) mdp_ok += v >= 1.5;
  return {quad_ok == 5 && mdp_ok == 3,
          fmt("quadratic %d/5 (worst ratio %.3f); Narrow MDP sparse %.3f %.3f %.3f, %d/3 >= 1.5", quad_ok, worst_ratio,
              bgs[0], bgs[1], bgs[2], mdp_ok)};
}

Verdict bgs_vs_ars() {
  run_mdp_pair();
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  const double b = mean(g_mdp[EliteRule::kBGS]), a = mean(g_mdp[EliteRule::kARS]);
  const auto& av = g_mdp[EliteRule::kARS];
  return {b >= a, fmt("BGS mean sparse %.3f vs ARS %.3f (ARS seeds %.3f %.3f %.3f)", b, a, av[0], av[1], av[2])};
}

// ---------------------------------------------------------------------------
// 8. Behaviour-model recovery on random boxes

// A random box around one accepted throw from the realistic envelope. Each
// quantity starts at 20-40% of the envelope width; all widths shrink by 0.7
// until 200 probe throws are accepted without rejection, so every part of
// the box is actually thrown and its bounds are observable. The landing
// region is the envelope's.
struct RandomBox {
  BallDistribution box;
  double width_fraction = 0.0;  // mean final fraction of the envelope width
};

RandomBox random_box(std::mt19937_64& rng, const PhysicsConstants& pc, const TableGeometry& tg) {
  const BallDistribution env = presets::s2r_oracle();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ThrowSample centre = sample_throw(env, rng(), pc, tg);
  std::array<double, 6> frac;
  for (auto& f : frac) f = 0.2 + 0.2 * u(rng);
  for (;;) {
    BallDistribution b = env;
    for (int k = 0; k < 3; ++k) {
      const double wp = frac[k] * (env.pos_max[k] - env.pos_min[k]);
      const double wv = frac[3 + k] * (env.vel_max[k] - env.vel_min[k]);
      b.pos_min[k] = centre.init.position[k] - wp * u(rng);
      b.pos_max[k] = b.pos_min[k] + wp;
      b.vel_min[k] = centre.init.velocity[k] - wv * u(rng);
      b.vel_max[k] = b.vel_min[k] + wv;
    }
    bool clean = true;
    const std::uint64_t probe = rng();
    try {
      for (std::uint64_t k = 0; k < 200 && clean; ++k) clean = sample_throw(b, derive_seed(probe, k), pc, tg, 50).attempts == 1;
    } catch (const InfeasibleDistribution&) {
      clean = false;
    }
    if (clean) return {b, std::accumulate(frac.begin(), frac.end(), 0.0) / 6.0};
    for (auto& f : frac) f *= 0.7;
  }
}

Verdict model_recovery() {
  std::mt19937_64 rng(8);
  const PhysicsConstants pc;
  const TableGeometry tg;
  int ok = 0, boxes = 0;
  double width = 0.0;
  std::string fails;
  while (boxes < 20) {
    const RandomBox rb = random_box(rng, pc, tg);
    const BallDistribution& box = rb.box;
    width += rb.width_fraction / 20.0;
    const std::uint64_t seed = rng();
    SyntheticDataset s = synthetic_dataset(box, 500, seed, 0.0, 0.05, pc, tg, presets::large());
    ++boxes;
    const EstimateReport rep = estimate_distribution_report(s.dataset, pc, tg, EstimateOptions{});
    bool excluded = true;
    std::array<double, 4> land = {1e9, 1e9, -1e9, -1e9};
    for (std::size_t i = 0; i < s.throws.size(); ++i) {
      if (s.outlier[i]) {
        excluded &= rep.status[i] != TrajectoryStatus::kUsed;
        continue;
      }
      land[0] = std::min(land[0], s.throws[i].landing.x());
      land[1] = std::min(land[1], s.throws[i].landing.y());
      land[2] = std::max(land[2], s.throws[i].landing.x());
      land[3] = std::max(land[3], s.throws[i].landing.y());
    }
    const auto got = rep.distribution.to_array();
    const auto want = box.to_array();
    const BallDistribution hull = BallDistribution::from_array(
        {want[0], want[1], want[2], want[3], want[4], want[5], want[6], want[7], want[8], want[9], want[10], want[11],
         land[0], land[1], land[2], land[3]});
    const auto truth = hull.to_array();
    double worst = 0.0;
    for (std::size_t f = 0; f < BallDistribution::kSize; ++f)
      worst = std::max(worst, std::abs(got[f] - truth[f]) / std::max(hull.range_of_field(f), 1e-9));
    const bool pass = excluded && worst <= 0.1;
    ok += pass;
    if (!pass) fails += fmt(" box%d(err %.2f widths, outliers %s)", boxes, worst, excluded ? "excluded" : "leaked");
  }
  return {ok >= 18, fmt("%d/20 boxes recovered within 10%% of width with all outliers excluded (mean box width %.2f of envelope)%s",
                        ok, width, fails.c_str())};
}

// 9. Trajectory-fit recovery

Verdict fit_recovery() {
  const PhysicsConstants pc;
  const TableGeometry tg;
  const BallDistribution box = presets::s2r_oracle();
  int clean = 0;
  std::vector<double> err;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const ThrowSample t = sample_throw(box, derive_seed(9, i), pc, tg);
    const FitResult r0 = fit_initial_state(render_trajectory(t.init, pc, tg, 0, 0.0), pc, tg);
    clean += r0.residual < 1e-4;
    const FitResult r1 = fit_initial_state(render_trajectory(t.init, pc, tg, derive_seed(9, i, 1), 0.02), pc, tg);
    err.push_back((r1.init_estimate.velocity - t.init.velocity).norm());
  }
  std::sort(err.begin(), err.end());
  const double p95 = err[94];
  return {clean >= 99 && p95 <= 0.15,
          fmt("noiseless residual < 1e-4 m in %d/100; 2 cm noise velocity error p95 %.3f m/s", clean, p95)};
}

// ---------------------------------------------------------------------------
// 10, 11, 13. Desk pipeline across master seeds

ExperimentConfig pipeline_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.mode = RunMode::kAll;
  c.master_seed = seed;
  c.schedule_preset = "desk";
  c.schedule = PhaseSchedule::desk();
  c.validate();
  return c;
}

json run_pipeline(std::uint64_t seed, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = pipeline_config(seed);
  cfg.output_dir = dir.string();
  Experiment e(cfg, dir);
  e.run();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const json s = json::parse(read_text(dir / "reports" / "summary.json"));
  progress(fmt("pipeline seed %llu done in %.0f s", static_cast<unsigned long long>(seed), secs));
  return s;
}

std::map<std::uint64_t, json> g_pipelines;

void run_pipelines() {
  if (!g_pipelines.empty()) return;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const fs::path dir = g_work / ("pipeline_seed" + std::to_string(seed));
    fs::remove_all(dir);
    g_pipelines[seed] = run_pipeline(seed, dir);
  }
}

Verdict convergence_diagnostic() {
  run_pipelines();
  int ok = 0;
  std::string detail;
  for (const auto& [seed, s] : g_pipelines) {
    const auto& d = s.at("model_deltas");
    const double d01 = d.at(0).at("summary").get<double>(), d12 = d.at(1).at("summary").get<double>();
    ok += d12 < d01;
    detail += fmt(" s%llu:%.3f/%.3f", static_cast<unsigned long long>(seed), d01, d12);
  }
  return {ok >= 4, fmt("delta(M1,M2) < delta(M0,M1) in %d/5 seeds; delta01/delta12 per seed:%s", ok, detail.c_str())};
}

Verdict rally_comparison() {
  run_pipelines();
  int ok = 0;
  std::string detail;
  for (const auto& [seed, s] : g_pipelines) {
    const double a = s.at("rallies").at("is2r").at("mean_length").get<double>();
    const double b = s.at("rallies").at("s2rft").at("mean_length").get<double>();
    ok += a >= b;
    detail += fmt(" s%llu:%.2f/%.2f", static_cast<unsigned long long>(seed), a, b);
  }
  return {ok >= 4, fmt("i-S2R mean rally >= S2R+FT in %d/5 seeds; i-S2R/S2R+FT per seed:%s", ok, detail.c_str())};
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir / "metrics"))
    if (e.path().extension() == ".csv") out[e.path().filename().string()] = read_text(e.path());
  return out;
}

Verdict determinism() {
  const fs::path a = g_work / "pipeline_seed1";
  if (!fs::exists(a / "reports" / "summary.json")) {
    fs::remove_all(a);
    run_pipeline(1, a);
  }
  const fs::path b = g_work / "pipeline_seed1_rerun";
  fs::remove_all(b);
  run_pipeline(1, b);
  const auto x = csv_files(a), y = csv_files(b);
  std::size_t same = 0;
  for (const auto& [name, text] : x) same += y.count(name) && y.at(name) == text;
  return {!x.empty() && same == x.size() && x.size() == y.size(),
          fmt("%zu/%zu metrics CSVs bit-identical across two runs of master seed 1", same, x.size())};
}

// 12. Oracle ablation analogue

Verdict oracle_ablation() {
  const BallDistribution medium = presets::medium();
  EnvConfig real;
  real.rewards = RewardConfig::real();
  SurrogateConfig sc;
  sc.responsive = false;
  std::map<std::string, std::vector<double>> scores;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (const char* name : {"medium", "large"}) {
      const BallDistribution model = presets::by_name(name);
      const PolicyState p = train_sim(initial_policy(derive_seed(seed, 0x1417)), model, kDeskUpdates,
                                      PhaseSchedule::desk_sim_es(), desk_sim_env(), derive_seed(seed, 0x5100, 12));
      SurrogateHuman h(medium, medium, sc);
      const auto ev = evaluate_sparse(p, h, kEvalEpisodes, real, derive_seed(seed, 0x0AC1));
      scores[name].push_back(ev.mean());
      progress(fmt("%s-trained seed %llu on Medium player: %.3f", name, static_cast<unsigned long long>(seed), ev.mean()));
    }
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  const double m = mean(scores["medium"]), l = mean(scores["large"]);
  return {m >= l, fmt("zero-shot sparse on a Medium player: Medium-trained %.3f vs Large-trained %.3f (3 seeds)", m, l)};
}

// 14. Reward ceiling

Verdict reward_ceiling() {
  const PhysicsConstants pc;
  const TableGeometry tg;
  double worst_sim = -1e9, worst_real = -1e9;
  for (int preset = 0; preset < 2; ++preset) {
    EnvConfig ec;
    ec.rewards = preset == 0 ? RewardConfig::sim() : RewardConfig::real();
    TableTennisEnv env(ec);
    double& worst = preset == 0 ? worst_sim : worst_real;
    for (std::uint64_t i = 0; i < 10000; ++i) {
      const double gain = 0.5 + 2.5 * static_cast<double>(i % 7) / 6.0;
      const auto params = init_params(derive_seed(14, preset, i), gain);
      const ThrowSample t = sample_throw(i % 2 ? presets::large() : presets::s2r_oracle(), derive_seed(14, preset, i, 1), pc, tg);
      const auto r = run_episode(env, params, Normalizer{}, t, EpisodeSeeds::from(derive_seed(14, preset, i, 2)));
      worst = std::max(worst, r.total_return);
    }
  }
  return {worst_sim <= 8.1 && worst_real <= 6.1,
          fmt("max return over 10^4 random-policy episodes: sim %.3f (cap 8.1), real %.3f (cap 6.1)", worst_sim, worst_real)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  g_work = fs::temp_directory_path() / "is2r_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N[,N...]] [--work DIR]\n");
      return 2;
    }
  }
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"physics oracle", physics},
      {"976 parameters", param_count_check},
      {"BGS vs ARS elite divergence", elite_divergence},
      {"update-rule oracle", update_oracle},
      {"orthogonality and marginals", directions_check},
      {"optimizer convergence", convergence},
      {"BGS >= ARS on the MDP", bgs_vs_ars},
      {"behaviour-model recovery", model_recovery},
      {"trajectory-fit recovery", fit_recovery},
      {"i-S2R convergence diagnostic", convergence_diagnostic},
      {"i-S2R vs S2R+FT rally length", rally_comparison},
      {"oracle ablation ordering", oracle_ablation},
      {"determinism", determinism},
      {"reward ceiling", reward_ceiling},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto& [name, fn] = criteria[i];
    std::fprintf(stderr, "[%2d] %s\n", id, name.c_str());
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s #%d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
