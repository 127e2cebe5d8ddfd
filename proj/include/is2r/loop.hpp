#pragma once

// Building blocks of the iterative sim-to-real loop: the surrogate human,
// throw sources, sim training and fine-tuning phases, seed selection, and
// rally evaluation.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "is2r/bgs.hpp"
#include "is2r/distribution.hpp"
#include "is2r/env.hpp"
#include "is2r/humanmodel.hpp"
#include "is2r/io.hpp"
#include "is2r/policy.hpp"

namespace is2r {

// Where throws come from during fine-tuning and evaluation. Training code
// sees only the emitted throws.
class ThrowSource {
 public:
  virtual ~ThrowSource() = default;
  // A throw that does not answer a robot return (start of a rally).
  virtual ThrowSample serve(std::uint64_t seed) = 0;
  // The answer to a robot return that landed on the human side; nullopt is a miss.
  virtual std::optional<ThrowSample> respond(const EpisodeEvents& robot_return, std::uint64_t seed) = 0;
};

enum class Skill { kBeginner, kIntermediate, kAdvanced };

inline const char* to_string(Skill s) {
  switch (s) {
    case Skill::kBeginner: return "beginner";
    case Skill::kIntermediate: return "intermediate";
    case Skill::kAdvanced: return "advanced";
  }
  return "beginner";
}

inline Skill skill_from_string(const std::string& s) {
  if (s == "beginner") return Skill::kBeginner;
  if (s == "intermediate") return Skill::kIntermediate;
  if (s == "advanced") return Skill::kAdvanced;
  throw ValidationError("unknown skill '" + s + "'");
}

struct SurrogateConfig {
  Skill skill = Skill::kBeginner;
  double coupling = 0.4;          // kappa: pull of the position box toward the robot's landing point
  double speed_clamp = 0.2;       // velocity scale limited to 1 +/- speed_clamp
  double miss_probability = -1.0; // < 0: skill default
  bool responsive = true;
  std::size_t max_rejects = 20000;

  int player() const {
    switch (skill) {
      case Skill::kBeginner: return 3;
      case Skill::kIntermediate: return 2;
      case Skill::kAdvanced: return 1;
    }
    return 3;
  }
  double miss() const {
    if (miss_probability >= 0.0) return miss_probability;
    switch (skill) {
      case Skill::kBeginner: return 0.3;
      case Skill::kIntermediate: return 0.2;
      case Skill::kAdvanced: return 0.1;
    }
    return 0.3;
  }

  void validate() const {
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw ValidationError("surrogate coupling must be in [0,1]");
    if (!(speed_clamp >= 0.0 && speed_clamp < 1.0)) throw ValidationError("surrogate speed_clamp must be in [0,1)");
    if (miss_probability > 1.0) throw ValidationError("surrogate miss_probability must be <= 1");
  }
};

// Stand-in for the human player. Without a robot it throws from a narrow
// "practice" box; facing the robot it plays from a wider hidden box whose
// position range is pulled toward wherever the robot's last return landed and
// whose velocities scale with the speed of that return.
class SurrogateHuman : public ThrowSource {
 public:
  SurrogateHuman(BallDistribution practice_box, BallDistribution hidden_box, SurrogateConfig config,
                 PhysicsConstants physics = {}, TableGeometry table = {})
      : practice_(practice_box), hidden_(hidden_box), cfg_(config), physics_(physics), table_(table) {
    cfg_.validate();
    practice_.validate(table_);
    hidden_.validate(table_);
    reference_speed_ = box_speed(hidden_);
  }

  static SurrogateHuman from_skill(const SurrogateConfig& config, PhysicsConstants physics = {}, TableGeometry table = {}) {
    const int p = config.player();
    return SurrogateHuman(presets::player(p, 0), presets::player(p, 2), config, physics, table);
  }

  // Throw made with no robot on the other side.
  ThrowSample practice_throw(std::uint64_t seed) const {
    return sample_throw(practice_, seed, physics_, table_, cfg_.max_rejects);
  }

  ThrowSample serve(std::uint64_t seed) override { return sample_throw(hidden_, seed, physics_, table_, cfg_.max_rejects); }

  std::optional<ThrowSample> respond(const EpisodeEvents& robot_return, std::uint64_t seed) override {
    if (!robot_return.hit || !robot_return.landed || !robot_return.landing) return serve(seed);
    std::mt19937_64 rng(derive_seed(seed, 0x55));
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg_.miss()) return std::nullopt;
    if (!cfg_.responsive) return serve(seed);
    const BallDistribution box = conditioned_box(*robot_return.landing, robot_return.return_velocity.norm());
    try {
      return sample_throw(box, derive_seed(seed, 0x56), physics_, table_, cfg_.max_rejects);
    } catch (const InfeasibleDistribution&) {
      return serve(seed);
    }
  }

  BallDistribution conditioned_box(const Vec2& landing, double incoming_speed) const {
    BallDistribution b = hidden_;
    const Vec2 centre{0.5 * (hidden_.pos_min.x() + hidden_.pos_max.x()), 0.5 * (hidden_.pos_min.y() + hidden_.pos_max.y())};
    Vec2 shift = cfg_.coupling * (landing - centre);
    // The box may drift toward the net only down to 0.3 m, and never closer than the hidden box already is.
    shift.y() = std::max(shift.y(), std::min(0.0, 0.3 - hidden_.pos_min.y()));
    for (int k = 0; k < 2; ++k) {
      b.pos_min[k] += shift[k];
      b.pos_max[k] += shift[k];
    }
    const double ratio =
        std::clamp(incoming_speed / std::max(reference_speed_, 1e-6), 1.0 - cfg_.speed_clamp, 1.0 + cfg_.speed_clamp);
    for (int k = 0; k < 3; ++k) {
      const double lo = hidden_.vel_min[k] * ratio, hi = hidden_.vel_max[k] * ratio;
      b.vel_min[k] = std::min(lo, hi);
      b.vel_max[k] = std::max(lo, hi);
    }
    return b;
  }

  const SurrogateConfig& config() const { return cfg_; }

 private:
  static double box_speed(const BallDistribution& d) {
    return (0.5 * (d.vel_min + d.vel_max)).norm();
  }

  BallDistribution practice_;
  BallDistribution hidden_;
  SurrogateConfig cfg_;
  PhysicsConstants physics_;
  TableGeometry table_;
  double reference_speed_ = 1.0;
};

// Logs everything a source emits so it can be replayed without the source.
class RecordingSource : public ThrowSource {
 public:
  explicit RecordingSource(ThrowSource& inner) : inner_(inner) {}
  ThrowSample serve(std::uint64_t seed) override {
    const ThrowSample t = inner_.serve(seed);
    log_.push_back(t);
    return t;
  }
  std::optional<ThrowSample> respond(const EpisodeEvents& e, std::uint64_t seed) override {
    auto t = inner_.respond(e, seed);
    log_.push_back(t);
    return t;
  }
  const std::vector<std::optional<ThrowSample>>& log() const { return log_; }

 private:
  ThrowSource& inner_;
  std::vector<std::optional<ThrowSample>> log_;
};

class ReplaySource : public ThrowSource {
 public:
  explicit ReplaySource(std::vector<std::optional<ThrowSample>> log) : log_(std::move(log)) {}
  ThrowSample serve(std::uint64_t) override {
    auto t = next();
    if (!t) throw ValidationError("replay: recorded serve was a miss");
    return *t;
  }
  std::optional<ThrowSample> respond(const EpisodeEvents&, std::uint64_t) override { return next(); }

 private:
  std::optional<ThrowSample> next() {
    if (pos_ >= log_.size()) throw ValidationError("replay log exhausted");
    return log_[pos_++];
  }
  std::vector<std::optional<ThrowSample>> log_;
  std::size_t pos_ = 0;
};

// Throws drawn from a behaviour model (the simulator's view of the human).
class ModelSource : public ThrowSource {
 public:
  ModelSource(BallDistribution model, PhysicsConstants physics = {}, TableGeometry table = {},
              std::size_t max_rejects = 20000)
      : model_(model), physics_(physics), table_(table), max_rejects_(max_rejects) {}
  ThrowSample serve(std::uint64_t seed) override { return sample_throw(model_, seed, physics_, table_, max_rejects_); }
  std::optional<ThrowSample> respond(const EpisodeEvents&, std::uint64_t seed) override { return serve(seed); }

 private:
  BallDistribution model_;
  PhysicsConstants physics_;
  TableGeometry table_;
  std::size_t max_rejects_;
};

// ---------------------------------------------------------------------------

struct PhaseSchedule {
  std::size_t iterations = 3;
  std::size_t first_sim_updates = 2000;
  std::size_t later_sim_updates = 300;
  std::vector<std::size_t> finetune_updates = {60, 70, 70};
  std::size_t oracle_finetune_updates = 70;
  std::size_t seed_candidates = 1;
  std::size_t selection_episodes = 50;
  std::size_t eval_episodes = 20;       // zero-shot check against the player after each sim phase
  std::size_t bootstrap_throws = 100;
  bool continue_from_sim = false;       // start sim phase i+1 from theta_iS instead of theta_iR
  ESConfig sim_es = desk_sim_es();
  ESConfig real_es = ESConfig::real();

  static ESConfig desk_sim_es() {
    ESConfig c;
    c.num_perturbations = 32;
    c.rollouts_per_perturbation = 2;
    c.step_size = 0.001;
    return c;
  }

  static PhaseSchedule desk() { return {}; }

  static PhaseSchedule paper() {
    PhaseSchedule s;
    s.first_sim_updates = 30000;
    s.later_sim_updates = 5000;
    s.seed_candidates = 3;
    s.sim_es = ESConfig::sim();
    return s;
  }

  std::size_t total_finetune() const {
    std::size_t n = 0;
    for (auto u : finetune_updates) n += u;
    return n;
  }

  void validate() const {
    if (iterations < 1) throw ValidationError("schedule needs at least one iteration");
    if (finetune_updates.size() != iterations) throw ValidationError("finetune_updates needs one entry per iteration");
    if (first_sim_updates < 1) throw ValidationError("first_sim_updates must be positive");
    if (seed_candidates < 1) throw ValidationError("seed_candidates must be >= 1");
    sim_es.validate();
    real_es.validate();
  }
};

struct PolicyState {
  std::vector<double> params;
  Normalizer normalizer;
};

inline PolicyState initial_policy(std::uint64_t seed) { return {init_params(seed), Normalizer{}}; }

inline std::vector<std::string> metrics_header() {
  return {"update", "mean_return", "max_return", "reward_std", "elite_mean_diff", "skipped"};
}

inline void add_metrics(CsvTable& t, std::size_t update, const UpdateReport& r) {
  t.add({static_cast<double>(update), r.mean_reward, r.max_reward, r.reward_std, r.elite_mean_difference,
         r.skipped ? 1.0 : 0.0});
}

// ES training in simulation against throws drawn from a behaviour model.
inline PolicyState train_sim(PolicyState start, const BallDistribution& model, std::size_t updates, const ESConfig& es,
                             const EnvConfig& env_config, std::uint64_t seed, CsvTable* metrics = nullptr,
                             const std::function<void(std::size_t, const PolicyState&)>& on_update = {}) {
  EnvConfig ec = env_config;
  ec.max_steps = es.max_env_steps;
  ec.validate();
  RolloutFn rollout = [&](std::span<const double> theta, const Normalizer& norm, std::uint64_t s, Normalizer& stats) {
    TableTennisEnv env(ec);
    const ThrowSample t = sample_throw(model, derive_seed(s, 0x7A), ec.physics, ec.table);
    return run_episode(env, theta, norm, t, EpisodeSeeds::from(s), es.use_obs_normalization ? &stats : nullptr)
        .total_return;
  };
  for (std::size_t u = 0; u < updates; ++u) {
    auto res = train_step(start.params, start.normalizer, rollout, es, derive_seed(seed, u));
    start.params = std::move(res.params);
    start.normalizer = res.normalizer;
    if (metrics) add_metrics(*metrics, u + 1, res.report);
    if (on_update) on_update(u + 1, start);
  }
  return start;
}

struct EvalSummary {
  std::vector<int> scores;
  std::vector<EpisodeRecord> episodes;
  double mean() const {
    double s = 0.0;
    for (int v : scores) s += v;
    return scores.empty() ? 0.0 : s / static_cast<double>(scores.size());
  }
};

// Independent single-throw episodes; normalizer frozen.
inline EvalSummary evaluate_sparse(const PolicyState& policy, ThrowSource& source, std::size_t episodes,
                                   const EnvConfig& env_config, std::uint64_t seed) {
  TableTennisEnv env(env_config);
  EvalSummary out;
  for (std::size_t i = 0; i < episodes; ++i) {
    const ThrowSample t = source.serve(derive_seed(seed, i, 1));
    EpisodeRecord r = run_episode(env, policy.params, policy.normalizer, t, EpisodeSeeds::from(derive_seed(seed, i, 2)));
    out.scores.push_back(sparse_eval_score(r));
    out.episodes.push_back(std::move(r));
  }
  return out;
}

inline EvalSummary evaluate_on_model(const PolicyState& policy, const BallDistribution& model, std::size_t episodes,
                                     const EnvConfig& env_config, std::uint64_t seed) {
  ModelSource src(model, env_config.physics, env_config.table);
  return evaluate_sparse(policy, src, episodes, env_config, seed);
}

// Highest mean score wins; ties go to the lowest index.
inline std::size_t select_seed_model(const std::vector<double>& mean_scores) {
  if (mean_scores.empty()) throw ValidationError("select_seed_model: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean_scores.size(); ++i)
    if (mean_scores[i] > mean_scores[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Fine-tuning against a throw source. Rollouts run one after another: each
// throw answers the previous episode's return.

struct FinetuneResult {
  PolicyState policy;
  std::vector<ThrowSample> throws;  // every throw the player made, in order
  std::vector<int> sparse_scores;
};

inline FinetuneResult finetune(PolicyState start, ThrowSource& human, std::size_t updates, const ESConfig& es,
                               const EnvConfig& env_config, std::uint64_t seed, CsvTable* metrics = nullptr) {
  EnvConfig ec = env_config;
  ec.max_steps = es.max_env_steps;
  TableTennisEnv env(ec);
  FinetuneResult out;
  EpisodeEvents last;
  bool have_last = false;
  ESConfig sequential = es;
  sequential.threads = 1;
  RolloutFn rollout = [&](std::span<const double> theta, const Normalizer& norm, std::uint64_t s, Normalizer& stats) {
    std::optional<ThrowSample> t = have_last ? human.respond(last, derive_seed(s, 0x71)) : human.serve(derive_seed(s, 0x72));
    if (!t) t = human.serve(derive_seed(s, 0x73));
    out.throws.push_back(*t);
    EpisodeRecord r = run_episode(env, theta, norm, *t, EpisodeSeeds::from(s), es.use_obs_normalization ? &stats : nullptr);
    last = r.events;
    have_last = true;
    out.sparse_scores.push_back(sparse_eval_score(r));
    return r.total_return;
  };
  for (std::size_t u = 0; u < updates; ++u) {
    auto res = train_step(start.params, start.normalizer, rollout, sequential, derive_seed(seed, u));
    start.params = std::move(res.params);
    start.normalizer = res.normalizer;
    if (metrics) add_metrics(*metrics, u + 1, res.report);
  }
  out.policy = std::move(start);
  return out;
}

// Observation-rate trajectories of throws, as the perception system would
// record them.
inline TrajectoryDataset render_throws(const std::vector<ThrowSample>& throws, const std::string& player_id, int iteration,
                                       TrajectorySource source, double noise, std::uint64_t seed,
                                       const PhysicsConstants& physics, const TableGeometry& table) {
  TrajectoryDataset d;
  for (std::size_t i = 0; i < throws.size(); ++i) {
    TrajectoryRecord r;
    r.trajectory = render_trajectory(throws[i].init, physics, table, derive_seed(seed, i), noise);
    r.player_id = player_id;
    r.iteration = iteration;
    r.source = source;
    d.records.push_back(std::move(r));
  }
  return d;
}

inline TrajectoryDataset bootstrap_dataset(const SurrogateHuman& human, std::size_t n_throws, std::uint64_t seed,
                                           double perception_noise, const PhysicsConstants& physics,
                                           const TableGeometry& table, std::size_t min_pts = 4) {
  if (n_throws < std::max<std::size_t>(1, min_pts))
    throw ValidationError("bootstrap_dataset: need at least min_pts throws");
  std::vector<ThrowSample> throws;
  for (std::size_t i = 0; i < n_throws; ++i) throws.push_back(human.practice_throw(derive_seed(seed, i)));
  return render_throws(throws, "player" + std::to_string(human.config().player()), 0, TrajectorySource::kBootstrap,
                       perception_noise, derive_seed(seed, 0xB0), physics, table);
}

// ---------------------------------------------------------------------------
// Rallies: the player serves, then robot and player alternate until someone
// misses. Length counts every paddle touch on both sides.

struct RallyReport {
  std::vector<std::size_t> lengths;
  std::vector<bool> censored;
  std::vector<int> robot_scores;         // sparse score of every robot shot
  std::vector<Vec2> incoming_landings;   // robot-side bounce of the ball each shot answered

  double mean_length() const {
    double s = 0.0;
    for (auto l : lengths) s += static_cast<double>(l);
    return lengths.empty() ? 0.0 : s / static_cast<double>(lengths.size());
  }
};

inline RallyReport rally_eval(const PolicyState& policy, ThrowSource& human, std::size_t n_rallies,
                              const EnvConfig& env_config, std::uint64_t seed, std::size_t cap = 200) {
  TableTennisEnv env(env_config);
  RallyReport rep;
  for (std::size_t r = 0; r < n_rallies; ++r) {
    std::optional<ThrowSample> incoming = human.serve(derive_seed(seed, r, 0));
    std::size_t touches = 1;
    bool censored = touches >= cap;
    for (std::size_t shot = 0; incoming && !censored; ++shot) {
      const EpisodeRecord ep = run_episode(env, policy.params, policy.normalizer, *incoming,
                                           EpisodeSeeds::from(derive_seed(seed, r, shot + 1)));
      rep.robot_scores.push_back(sparse_eval_score(ep));
      rep.incoming_landings.push_back(incoming->landing);
      if (!ep.events.hit) break;
      censored = ++touches >= cap;
      if (censored || !ep.events.landed || ep.events.fault) break;
      incoming = human.respond(ep.events, derive_seed(seed, r, shot + 1, 7));
      if (incoming) censored = ++touches >= cap;
    }
    rep.lengths.push_back(touches);
    rep.censored.push_back(censored);
  }
  return rep;
}

// Robot hit rate by where the incoming ball bounced on the robot's half:
// a 3x3 grid of regions, each split 3x3 again (81 cells). Row 0 is nearest
// the net, column 0 is the robot's left (-x).
struct HeatmapCell {
  std::size_t coarse_row, coarse_col, fine_row, fine_col;
  double x_min, x_max, y_min, y_max;
  std::size_t shots = 0;
  std::size_t hits = 0;
};

inline std::vector<HeatmapCell> landing_heatmap(const std::vector<Vec2>& landings, const std::vector<int>& scores,
                                                const TableGeometry& table) {
  if (landings.size() != scores.size()) throw ValidationError("landing_heatmap: size mismatch");
  constexpr std::size_t n = 9;
  const double w = 2.0 * table.half_width / n, h = table.half_length / n;
  std::vector<HeatmapCell> cells;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      cells.push_back({r / 3, c / 3, r % 3, c % 3, -table.half_width + double(c) * w,
                       -table.half_width + double(c + 1) * w, -double(r + 1) * h, -double(r) * h});
  for (std::size_t i = 0; i < landings.size(); ++i) {
    const auto col = static_cast<std::size_t>(std::clamp((landings[i].x() + table.half_width) / w, 0.0, n - 1.0));
    const auto row = static_cast<std::size_t>(std::clamp(-landings[i].y() / h, 0.0, n - 1.0));
    auto& cell = cells[row * n + col];
    ++cell.shots;
    if (scores[i] >= 1) ++cell.hits;
  }
  return cells;
}

inline std::string heatmap_csv(const std::vector<HeatmapCell>& cells) {
  std::size_t total = 0;
  for (const auto& c : cells) total += c.shots;
  CsvTable t({"coarse_row", "coarse_col", "fine_row", "fine_col", "x_min", "x_max", "y_min", "y_max", "shots", "hits",
              "hit_rate", "percent_of_shots"});
  for (const auto& c : cells)
    t.add({double(c.coarse_row), double(c.coarse_col), double(c.fine_row), double(c.fine_col), c.x_min, c.x_max,
           c.y_min, c.y_max, double(c.shots), double(c.hits), c.shots ? double(c.hits) / double(c.shots) : 0.0,
           total ? 100.0 * double(c.shots) / double(total) : 0.0});
  return t.str();
}

inline std::vector<double> normalize_lengths(const std::vector<double>& x, double mean, double stddev) {
  if (!(stddev > 0.0)) throw ValidationError("normalize_lengths: stddev must be positive");
  std::vector<double> out;
  for (double v : x) out.push_back((v - mean) / stddev);
  return out;
}

// z-score against the pool itself (population statistics).
inline std::vector<double> normalize_against_pool(const std::vector<double>& pool) {
  if (pool.empty()) throw ValidationError("normalize_against_pool: empty pool");
  double mean = 0.0;
  for (double v : pool) mean += v;
  mean /= static_cast<double>(pool.size());
  double var = 0.0;
  for (double v : pool) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(pool.size()));
  return normalize_lengths(pool, mean, sd > 0.0 ? sd : 1.0);
}

}  // namespace is2r
