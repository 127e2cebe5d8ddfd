#pragma once

// Single-throw table-tennis environment at 75 Hz: the ball comes from a
// throw sample, the robot is driven by joint velocities that arrive late,
// and observations are delayed, interpolated, and noisy.

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "is2r/balldyn.hpp"
#include "is2r/humanmodel.hpp"
#include "is2r/kinematics.hpp"
#include "is2r/policy.hpp"

namespace is2r {

struct LatencyChannel {
  double mean_ms = 0.0;
  double spread_ms = 0.0;
};

struct LatencyModel {
  LatencyChannel ball_obs{40.0, 8.2};
  LatencyChannel arm_obs{29.0, 8.2};
  LatencyChannel gantry_obs{33.0, 9.0};
  LatencyChannel arm_action{71.0, 5.7};
  LatencyChannel gantry_action{64.5, 11.5};
  bool spread_is_variance = false;  // read the second column as sigma^2 instead of sigma
  bool enabled = true;

  static LatencyModel none() {
    LatencyModel m;
    m.enabled = false;
    return m;
  }

  void validate() const {
    for (const auto* c : {&ball_obs, &arm_obs, &gantry_obs, &arm_action, &gantry_action})
      if (!std::isfinite(c->mean_ms) || !(c->spread_ms >= 0.0)) throw ValidationError("latency channel must be finite with spread >= 0");
  }
};

// Per-episode latencies in seconds.
struct LatencySample {
  double ball_obs = 0.0, arm_obs = 0.0, gantry_obs = 0.0, arm_action = 0.0, gantry_action = 0.0;
};

inline LatencySample sample_latency(const LatencyModel& model, std::uint64_t seed) {
  LatencySample s;
  if (!model.enabled) return s;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const LatencyChannel& c) {
    const double sd = model.spread_is_variance ? std::sqrt(c.spread_ms) : c.spread_ms;
    return std::max(0.0, c.mean_ms + sd * normal(rng)) / 1000.0;
  };
  s.ball_obs = draw(model.ball_obs);
  s.arm_obs = draw(model.arm_obs);
  s.gantry_obs = draw(model.gantry_obs);
  s.arm_action = draw(model.arm_action);
  s.gantry_action = draw(model.gantry_action);
  return s;
}

// ---------------------------------------------------------------------------
// Rewards
//
//  1 landing proximity  [0,5]   hit and land: 1 + 4*max(0, 1 - d/d_max); hit only: 1;
//                               no hit: 0.5*max(0, 1 - closest_approach/approach_radius)
//  2 net clearance      [0,1]   max(0, 1 - |z_net - z_target|/net_band) when passing over the net
//  3 hit and land       {0,1}
//  4 fault              {-2,0}
//  5 jerk               [0,1]   fraction of steps with max_j |d2 qd_j| <= jerk_limit * limit_j
//  6 acceleration       [0,1]   fraction of steps with max_j |d qd_j| <= accel_limit * limit_j
//  7 velocity           [0,1]   fraction of steps with max_j |qd_j| <= velocity_limit * limit_j
//  8 joint angle        [0,1]   fraction of steps with every joint inside the comfort band
//  9 collision          -1/step paddle near the table top or the shoulder
// 10 paddle height      -1/step paddle centre below min_paddle_height
// 11 style              -1/step paddle facing away from the table (normal_y < min_normal_y)

inline constexpr std::size_t kNumRewardTerms = 11;
using RewardVector = std::array<double, kNumRewardTerms>;

struct RewardConfig {
  RewardVector weights{};
  Vec2 target{0.0, 0.685};
  double landing_radius = 1.0;
  double approach_radius = 0.5;
  double net_target_offset = 0.15;
  double net_band = 0.5;
  double jerk_limit = 0.5;
  double accel_limit = 0.5;
  double velocity_limit = 0.9;
  double comfort_band = 0.9;       // fraction of the half-range around the range centre
  double collision_margin = 0.05;
  double shoulder_margin = 0.22;
  double min_paddle_height = 0.0;
  double min_normal_y = 0.2;

  static RewardConfig sim() {
    RewardConfig c;
    c.weights = {1.0, 1.0, 0.1, 0.0, 0.3, 0.3, 0.4, 1.0, 1.0, 0.5, 1.0};
    return c;
  }
  static RewardConfig real() {
    RewardConfig c;
    c.weights = {1.0, 1.0, 0.1, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    return c;
  }

  static constexpr RewardVector term_max() { return {5.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }
  static constexpr RewardVector term_min_per_episode() { return {0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}; }

  double max_return() const {
    double s = 0.0;
    const auto mx = term_max();
    for (std::size_t i = 0; i < kNumRewardTerms; ++i) s += weights[i] * mx[i];
    return s;
  }

  void validate() const {
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("reward weights must be finite and >= 0");
    if (!(landing_radius > 0.0 && approach_radius > 0.0 && net_band > 0.0))
      throw ValidationError("reward radii must be positive");
  }
};

// ---------------------------------------------------------------------------

struct EnvConfig {
  PhysicsConstants physics;
  TableGeometry table;
  RobotGeometry robot;
  ActionLimits limits;
  LatencyModel latency;
  RewardConfig rewards = RewardConfig::sim();
  double obs_noise = 0.040;          // half-width of the per-axis uniform ball noise, m
  std::size_t max_steps = 200;
  std::size_t contact_substeps = 8;
  double flight_horizon = 3.0;       // post-hit outcome simulation, s
  double miss_y = -2.6;              // ball past the robot
  double miss_z = -0.3;              // ball fallen below the table top
  double fault_table_clearance = 0.01;
  double fault_shoulder_distance = 0.12;

  void validate() const {
    physics.validate();
    table.validate();
    robot.validate();
    latency.validate();
    rewards.validate();
    if (!(obs_noise >= 0.0)) throw ValidationError("obs_noise must be >= 0");
    if (max_steps < 1 || contact_substeps < 1) throw ValidationError("max_steps and contact_substeps must be >= 1");
  }
};

struct EpisodeEvents {
  bool hit = false;
  double hit_time = 0.0;
  Vec3 hit_position = Vec3::Zero();
  Vec3 return_velocity = Vec3::Zero();
  bool landed = false;                 // first bounce after the hit on the human side
  std::optional<Vec2> landing;
  std::optional<double> net_crossing_z;
  bool net_hit = false;
  bool fault = false;
  std::string fault_reason;
  std::size_t robot_side_bounces = 0;
  double closest_approach = std::numeric_limits<double>::infinity();
};

struct StepRecord {
  ObservationWindow obs;
  Action action;
  RewardVector breakdown{};
  double reward = 0.0;
};

struct EpisodeRecord {
  ThrowSample throw_used;
  std::vector<StepRecord> steps;
  EpisodeEvents events;
  RewardVector breakdown{};  // per-term totals, weighted
  double total_return = 0.0;
  std::size_t num_steps = 0;
};

struct StepResult {
  ObservationWindow obs;
  double reward = 0.0;
  bool done = false;
  RewardVector breakdown{};
};

inline int sparse_eval_score(const EpisodeEvents& e) {
  if (e.fault) return -2;
  return (e.hit ? 1 : 0) + (e.hit && e.landed ? 1 : 0);
}
inline int sparse_eval_score(const EpisodeRecord& r) { return sparse_eval_score(r.events); }

// Weighted terms 1-4, which depend only on how the episode ended.
inline RewardVector outcome_rewards(const EpisodeEvents& e, const RewardConfig& rc, const TableGeometry& table) {
  RewardVector terms{};
  double t1;
  if (e.hit) {
    t1 = 1.0;
    if (e.landed) t1 += 4.0 * std::max(0.0, 1.0 - (*e.landing - rc.target).norm() / rc.landing_radius);
  } else {
    t1 = 0.5 * std::max(0.0, 1.0 - e.closest_approach / rc.approach_radius);
  }
  terms[0] = rc.weights[0] * t1;
  if (e.hit && e.net_crossing_z && *e.net_crossing_z > table.net_height) {
    const double z_target = table.net_height + rc.net_target_offset;
    terms[1] = rc.weights[1] * std::max(0.0, 1.0 - std::abs(*e.net_crossing_z - z_target) / rc.net_band);
  }
  if (e.hit && e.landed) terms[2] = rc.weights[2];
  if (e.fault) terms[3] = rc.weights[3] * -2.0;
  return terms;
}

class TableTennisEnv {
 public:
  explicit TableTennisEnv(EnvConfig config) : cfg_(std::move(config)) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  const EpisodeEvents& events() const { return events_; }
  const LatencySample& latency() const { return lat_; }
  const BallState& ball() const { return ball_; }
  const JointVector& joints() const { return q_; }
  JointVector joint_velocities() const { return cmd_velocity(time_); }
  double time() const { return time_; }
  std::size_t steps() const { return step_; }
  bool done() const { return done_; }

  ObservationWindow reset(const ThrowSample& throw_sample, std::uint64_t latency_seed, std::uint64_t noise_seed) {
    const BallState& init = throw_sample.init;
    if (!init.valid() || detail::outside_world(init.position, cfg_.table) ||
        (init.position.z() < 0.0 && cfg_.table.on_table(init.position.x(), init.position.y())))
      throw ValidationError("reset: throw starts outside the playable volume");
    ball_ = init;
    ball_.time = 0.0;
    time_ = 0.0;
    step_ = 0;
    done_ = false;
    q_ = cfg_.robot.home;
    lat_ = sample_latency(cfg_.latency, latency_seed);
    noise_rng_.seed(noise_seed);
    events_ = EpisodeEvents{};
    actions_.clear();
    ball_hist_.assign(1, ball_.position);
    joint_hist_.assign(1, q_);
    prev_qd_.fill(0.0);
    prev_dqd_.fill(0.0);
    jerk_ok_ = accel_ok_ = vel_ok_ = angle_ok_ = 0;
    totals_.fill(0.0);
    const ObservationRow row = observe();
    for (auto& r : window_) r = row;
    track_approach();
    return window_;
  }

  StepResult step(const Action& action) {
    if (done_) throw ValidationError("step called on a finished episode");
    StepResult out;
    RewardVector terms{};
    bool finite = true;
    for (double a : action) finite = finite && std::isfinite(a);
    if (!finite) {
      fault("non-finite action");
      finish(terms);
      return package(out, terms);
    }
    Action clamped;
    for (std::size_t j = 0; j < kNumJoints; ++j)
      clamped[j] = std::clamp(action[j], -cfg_.limits.for_joint(j), cfg_.limits.for_joint(j));
    actions_.push_back({time_, clamped});

    const double dt = kControlDt;
    const BallState b0 = ball_;
    std::vector<FlightEvent> flight_events;
    bool stop = false;
    BallState b1 = advance_with_events(b0, cfg_.physics, cfg_.table, dt, flight_events, stop);
    b1.time = b0.time + dt;

    // Piecewise-linear ball path through any bounce inside the step.
    std::vector<BallState> keys = {b0};
    for (const auto& e : flight_events)
      if (e.kind == FlightEventKind::kTableBounce) keys.push_back({e.position, e.velocity_after, e.time});
    keys.push_back(b1);

    const std::size_t sub = cfg_.contact_substeps;
    const double h = dt / static_cast<double>(sub);
    for (std::size_t s = 0; s < sub && !events_.hit && !events_.fault; ++s) {
      const double t_start = time_ + static_cast<double>(s) * h;
      JointVector qd = cmd_velocity(t_start);
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        const double next = q_[j] + qd[j] * h;
        const double lim = std::clamp(next, cfg_.robot.lower[j], cfg_.robot.upper[j]);
        if (lim != next) qd[j] = (lim - q_[j]) / h;
        q_[j] = lim;
      }
      const double t_end = t_start + h;
      const KinematicState ks = forward_kinematics(cfg_.robot, q_);
      if (check_fault(ks)) break;
      const BallState bs = interpolate(keys, t_end);
      events_.closest_approach = std::min(events_.closest_approach, (bs.position - ks.paddle.position).norm());
      const PaddleMotion pm = paddle_motion(cfg_.robot, q_, qd);
      const BallState after = paddle_contact(bs, pm.pose, pm.velocity, cfg_.physics);
      if (after.velocity != bs.velocity) resolve_hit(after, pm);
    }

    time_ += dt;
    ++step_;
    if (!events_.hit && !events_.fault) {
      ball_ = b1;
      for (const auto& e : flight_events) {
        if (e.kind == FlightEventKind::kTableBounce && cfg_.table.on_robot_side(e.position.x(), e.position.y()))
          ++events_.robot_side_bounces;
      }
    }
    ball_hist_.push_back(ball_.position);
    joint_hist_.push_back(q_);

    // Per-step smoothness bookkeeping and penalties.
    const JointVector qd_now = cmd_velocity(time_ - 1e-12);
    smoothness(qd_now);
    const KinematicState ks = forward_kinematics(cfg_.robot, q_);
    step_penalties(ks, terms);

    const ObservationRow row = observe();
    for (std::size_t i = 0; i + 1 < kWindow; ++i) window_[i] = window_[i + 1];
    window_[kWindow - 1] = row;

    const bool missed = !events_.hit && (stop || events_.robot_side_bounces >= 2 || ball_.position.y() < cfg_.miss_y ||
                                         ball_.position.z() < cfg_.miss_z);
    if (events_.hit || events_.fault || missed || step_ >= cfg_.max_steps) finish(terms);
    return package(out, terms);
  }

  RewardVector totals() const { return totals_; }

 private:
  struct TimedAction {
    double time;
    Action action;
  };

  EnvConfig cfg_;
  BallState ball_;
  JointVector q_{};
  double time_ = 0.0;
  std::size_t step_ = 0;
  bool done_ = false;
  LatencySample lat_;
  std::mt19937_64 noise_rng_;
  EpisodeEvents events_;
  std::vector<TimedAction> actions_;
  std::vector<Vec3> ball_hist_;
  std::vector<JointVector> joint_hist_;
  ObservationWindow window_{};
  JointVector prev_qd_{}, prev_dqd_{};
  std::size_t jerk_ok_ = 0, accel_ok_ = 0, vel_ok_ = 0, angle_ok_ = 0;
  RewardVector totals_{};

  StepResult& package(StepResult& out, const RewardVector& terms) {
    out.obs = window_;
    out.breakdown = terms;
    out.reward = 0.0;
    for (std::size_t i = 0; i < kNumRewardTerms; ++i) {
      out.reward += terms[i];
      totals_[i] += terms[i];
    }
    out.done = done_;
    return out;
  }

  // Velocity command in force at time t for each joint channel.
  JointVector cmd_velocity(double t) const {
    JointVector qd{};
    for (std::size_t channel = 0; channel < 2; ++channel) {
      const double lag = channel == 0 ? lat_.gantry_action : lat_.arm_action;
      const std::size_t lo = channel == 0 ? 0 : 2, hi = channel == 0 ? 2 : kNumJoints;
      for (auto it = actions_.rbegin(); it != actions_.rend(); ++it) {
        if (it->time + lag <= t + 1e-12) {
          for (std::size_t j = lo; j < hi; ++j) qd[j] = it->action[j];
          break;
        }
      }
    }
    return qd;
  }

  static BallState interpolate(const std::vector<BallState>& keys, double t) {
    if (t <= keys.front().time) return keys.front();
    for (std::size_t i = 1; i < keys.size(); ++i) {
      if (t <= keys[i].time) {
        const double span = keys[i].time - keys[i - 1].time;
        const double f = span > 0.0 ? (t - keys[i - 1].time) / span : 1.0;
        return detail::lerp(keys[i - 1], keys[i], f);
      }
    }
    return keys.back();
  }

  template <typename T>
  static T lerp_history(const std::vector<T>& hist, double t) {
    const double u = t / kControlDt;
    if (u <= 0.0) return hist.front();
    const auto k = static_cast<std::size_t>(std::floor(u));
    if (k + 1 >= hist.size()) return hist.back();
    const double f = u - static_cast<double>(k);
    if constexpr (std::is_same_v<T, Vec3>) {
      return hist[k] + f * (hist[k + 1] - hist[k]);
    } else {
      T out;
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = hist[k][j] + f * (hist[k + 1][j] - hist[k][j]);
      return out;
    }
  }

  ObservationRow observe() {
    ObservationRow row;
    const Vec3 ball = lerp_history(ball_hist_, time_ - lat_.ball_obs);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    for (int k = 0; k < 3; ++k) row[static_cast<std::size_t>(k)] = ball[k] + (cfg_.obs_noise > 0.0 ? cfg_.obs_noise * noise(noise_rng_) : 0.0);
    const JointVector gantry = lerp_history(joint_hist_, time_ - lat_.gantry_obs);
    const JointVector arm = lerp_history(joint_hist_, time_ - lat_.arm_obs);
    for (std::size_t j = 0; j < kNumJoints; ++j) row[3 + j] = j < 2 ? gantry[j] : arm[j];
    return row;
  }

  void track_approach() {
    const KinematicState ks = forward_kinematics(cfg_.robot, q_);
    events_.closest_approach = std::min(events_.closest_approach, (ball_.position - ks.paddle.position).norm());
  }

  void fault(const std::string& why) {
    events_.fault = true;
    events_.fault_reason = why;
  }

  bool check_fault(const KinematicState& ks) {
    const Vec3& p = ks.paddle.position;
    const bool over_table = std::abs(p.x()) <= cfg_.table.half_width && std::abs(p.y()) <= cfg_.table.half_length;
    if (over_table && p.z() < cfg_.fault_table_clearance) {
      fault("paddle intersects the table");
      return true;
    }
    if ((p - ks.shoulder).norm() < cfg_.fault_shoulder_distance) {
      fault("paddle collides with the arm");
      return true;
    }
    return false;
  }

  void resolve_hit(const BallState& after, const PaddleMotion& pm) {
    events_.hit = true;
    events_.hit_time = after.time;
    events_.hit_position = after.position;
    events_.return_velocity = after.velocity;
    (void)pm;
    const FlightResult flight = simulate_flight(after, cfg_.physics, kControlDt, cfg_.flight_horizon, cfg_.table);
    for (const auto& e : flight.events) {
      if (e.kind == FlightEventKind::kNetCrossing) {
        if (!events_.net_crossing_z) events_.net_crossing_z = e.position.z();
        continue;
      }
      if (e.kind == FlightEventKind::kNetHit) events_.net_hit = true;
      if (e.kind == FlightEventKind::kTableBounce && cfg_.table.on_human_side(e.position.x(), e.position.y())) {
        events_.landed = true;
        events_.landing = Vec2{e.position.x(), e.position.y()};
      }
      break;
    }
    ball_ = after;
  }

  void smoothness(const JointVector& qd) {
    const auto& rc = cfg_.rewards;
    bool jerk = true, accel = true, vel = true, angle = true;
    JointVector dqd{};
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double lim = cfg_.limits.for_joint(j);
      dqd[j] = qd[j] - prev_qd_[j];
      if (std::abs(dqd[j] - prev_dqd_[j]) > rc.jerk_limit * lim) jerk = false;
      if (std::abs(dqd[j]) > rc.accel_limit * lim) accel = false;
      if (std::abs(qd[j]) > rc.velocity_limit * lim) vel = false;
      const double centre = 0.5 * (cfg_.robot.upper[j] + cfg_.robot.lower[j]);
      const double half = 0.5 * (cfg_.robot.upper[j] - cfg_.robot.lower[j]);
      if (std::abs(q_[j] - centre) > rc.comfort_band * half) angle = false;
    }
    prev_dqd_ = dqd;
    prev_qd_ = qd;
    jerk_ok_ += jerk;
    accel_ok_ += accel;
    vel_ok_ += vel;
    angle_ok_ += angle;
  }

  void step_penalties(const KinematicState& ks, RewardVector& terms) const {
    const auto& rc = cfg_.rewards;
    const Vec3& p = ks.paddle.position;
    const bool over_table = std::abs(p.x()) <= cfg_.table.half_width + rc.collision_margin &&
                            std::abs(p.y()) <= cfg_.table.half_length + rc.collision_margin;
    const bool near_table = over_table && p.z() < rc.collision_margin;
    const bool near_arm = (p - ks.shoulder).norm() < rc.shoulder_margin;
    if (near_table || near_arm || events_.fault) terms[8] -= rc.weights[8];
    if (p.z() < rc.min_paddle_height) terms[9] -= rc.weights[9];
    if (ks.paddle.normal.y() < rc.min_normal_y) terms[10] -= rc.weights[10];
  }

  void finish(RewardVector& terms) {
    done_ = true;
    const auto& rc = cfg_.rewards;
    const RewardVector outcome = outcome_rewards(events_, rc, cfg_.table);
    for (std::size_t i = 0; i < 4; ++i) terms[i] += outcome[i];
    const double n = static_cast<double>(std::max<std::size_t>(step_, 1));
    terms[4] += rc.weights[4] * static_cast<double>(jerk_ok_) / n;
    terms[5] += rc.weights[5] * static_cast<double>(accel_ok_) / n;
    terms[6] += rc.weights[6] * static_cast<double>(vel_ok_) / n;
    terms[7] += rc.weights[7] * static_cast<double>(angle_ok_) / n;
  }
};

// ---------------------------------------------------------------------------

struct EpisodeSeeds {
  std::uint64_t latency = 0;
  std::uint64_t noise = 0;

  static EpisodeSeeds from(std::uint64_t seed) { return {derive_seed(seed, 0x1A7), derive_seed(seed, 0x2015E)}; }
};

// Runs one episode with the policy. When `stats` is given every observation
// fed to the policy is recorded into it.
inline EpisodeRecord run_episode(TableTennisEnv& env, std::span<const double> params, const Normalizer& norm,
                                 const ThrowSample& throw_sample, EpisodeSeeds seeds, Normalizer* stats = nullptr,
                                 bool record_steps = false) {
  EpisodeRecord rec;
  rec.throw_used = throw_sample;
  ObservationWindow obs = env.reset(throw_sample, seeds.latency, seeds.noise);
  while (!env.done()) {
    if (stats) stats->update(obs.back());
    const Action a = forward(params, obs, norm, env.config().limits);
    StepResult r = env.step(a);
    if (record_steps) rec.steps.push_back({obs, a, r.breakdown, r.reward});
    rec.total_return += r.reward;
    obs = r.obs;
  }
  rec.events = env.events();
  rec.breakdown = env.totals();
  rec.num_steps = env.steps();
  return rec;
}

}  // namespace is2r
