#pragma once

// Experiment configuration: a versioned JSON document. Missing keys take the
// defaults below; unknown keys are rejected so typos surface early.

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "is2r/bgs.hpp"
#include "is2r/distribution.hpp"
#include "is2r/env.hpp"
#include "is2r/io.hpp"
#include "is2r/loop.hpp"

namespace is2r {

inline constexpr int kSchemaVersion = 1;

enum class RunMode { kIS2R, kS2RFT, kOracle, kAll, kFixed };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::kIS2R: return "is2r";
    case RunMode::kS2RFT: return "s2rft";
    case RunMode::kOracle: return "oracle";
    case RunMode::kAll: return "all";
    case RunMode::kFixed: return "fixed";
  }
  return "is2r";
}

inline RunMode run_mode_from_string(const std::string& s) {
  for (RunMode m : {RunMode::kIS2R, RunMode::kS2RFT, RunMode::kOracle, RunMode::kAll, RunMode::kFixed})
    if (s == to_string(m)) return m;
  throw ValidationError("unknown mode '" + s + "' (expected is2r, s2rft, oracle, all, fixed)");
}

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  RunMode mode = RunMode::kAll;
  std::uint64_t master_seed = 1;
  std::string output_dir = "is2r_run";
  std::string schedule_preset = "desk";
  PhaseSchedule schedule = PhaseSchedule::desk();
  EnvConfig env;
  RewardConfig sim_rewards = RewardConfig::sim();
  RewardConfig real_rewards = RewardConfig::real();
  SurrogateConfig surrogate;
  ClusterOptions cluster;
  double perception_noise = 0.01;     // m, uniform per axis on recorded trajectories
  std::string fixed_distribution = "narrow";  // used by mode "fixed"
  std::size_t eval_rallies = 50;
  std::size_t rally_cap = 200;
  std::size_t threads = 1;

  EnvConfig sim_env() const {
    EnvConfig e = env;
    e.rewards = sim_rewards;
    return e;
  }
  EnvConfig real_env() const {
    EnvConfig e = env;
    e.rewards = real_rewards;
    return e;
  }

  void validate() const {
    if (schema_version != kSchemaVersion)
      throw ValidationError("unsupported schema_version " + std::to_string(schema_version));
    schedule.validate();
    sim_env().validate();
    real_env().validate();
    surrogate.validate();
    if (!(cluster.eps > 0.0) || cluster.min_pts < 1) throw ValidationError("cluster options invalid");
    if (!(perception_noise >= 0.0)) throw ValidationError("perception_noise must be >= 0");
    if (schedule.bootstrap_throws < cluster.min_pts) throw ValidationError("bootstrap_throws must be >= cluster.min_pts");
    presets::by_name(fixed_distribution);
    if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ValidationError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

inline json es_to_json(const ESConfig& c) {
  return {{"step_size", c.step_size},
          {"perturbation_standard_deviation", c.perturbation_std},
          {"number_of_perturbations", c.num_perturbations},
          {"number_of_rollouts_per_perturbation", c.rollouts_per_perturbation},
          {"percentage_to_keep", c.elite_fraction * 100.0},
          {"maximum_environment_steps_per_rollout", c.max_env_steps},
          {"use_orthogonal_perturbations", c.use_orthogonal},
          {"use_observation_normalization", c.use_obs_normalization},
          {"elite_rule", to_string(c.elite_rule)},
          {"reward_std_scope", to_string(c.reward_std_scope)},
          {"common_random_numbers", c.common_random_numbers},
          {"failed_rollout_reward", c.failed_rollout_reward}};
}

inline ESConfig es_from_json(const json& j, ESConfig c) {
  check_keys(j,
             {"step_size", "perturbation_standard_deviation", "number_of_perturbations",
              "number_of_rollouts_per_perturbation", "percentage_to_keep", "maximum_environment_steps_per_rollout",
              "use_orthogonal_perturbations", "use_observation_normalization", "elite_rule", "reward_std_scope",
              "common_random_numbers", "failed_rollout_reward"},
             "es");
  read(j, "step_size", c.step_size);
  read(j, "perturbation_standard_deviation", c.perturbation_std);
  read(j, "number_of_perturbations", c.num_perturbations);
  read(j, "number_of_rollouts_per_perturbation", c.rollouts_per_perturbation);
  if (j.contains("percentage_to_keep")) c.elite_fraction = j.at("percentage_to_keep").get<double>() / 100.0;
  read(j, "maximum_environment_steps_per_rollout", c.max_env_steps);
  read(j, "use_orthogonal_perturbations", c.use_orthogonal);
  read(j, "use_observation_normalization", c.use_obs_normalization);
  if (j.contains("elite_rule")) {
    const auto r = j.at("elite_rule").get<std::string>();
    if (r == "bgs") c.elite_rule = EliteRule::kBGS;
    else if (r == "ars") c.elite_rule = EliteRule::kARS;
    else throw ValidationError("elite_rule must be 'bgs' or 'ars'");
  }
  if (j.contains("reward_std_scope")) {
    const auto r = j.at("reward_std_scope").get<std::string>();
    if (r == "elite") c.reward_std_scope = RewardStdScope::kEliteMeans;
    else if (r == "all") c.reward_std_scope = RewardStdScope::kAllMeans;
    else throw ValidationError("reward_std_scope must be 'elite' or 'all'");
  }
  read(j, "common_random_numbers", c.common_random_numbers);
  read(j, "failed_rollout_reward", c.failed_rollout_reward);
  return c;
}

inline json rewards_to_json(const RewardConfig& r) {
  return {{"weights", r.weights},
          {"target", {r.target.x(), r.target.y()}},
          {"landing_radius", r.landing_radius},
          {"approach_radius", r.approach_radius},
          {"net_target_offset", r.net_target_offset},
          {"net_band", r.net_band},
          {"jerk_limit", r.jerk_limit},
          {"accel_limit", r.accel_limit},
          {"velocity_limit", r.velocity_limit},
          {"comfort_band", r.comfort_band},
          {"collision_margin", r.collision_margin},
          {"shoulder_margin", r.shoulder_margin},
          {"min_paddle_height", r.min_paddle_height},
          {"min_normal_y", r.min_normal_y}};
}

inline RewardConfig rewards_from_json(const json& j, RewardConfig r) {
  check_keys(j,
             {"weights", "target", "landing_radius", "approach_radius", "net_target_offset", "net_band", "jerk_limit",
              "accel_limit", "velocity_limit", "comfort_band", "collision_margin", "shoulder_margin",
              "min_paddle_height", "min_normal_y"},
             "rewards");
  read(j, "weights", r.weights);
  if (j.contains("target")) {
    const auto t = j.at("target").get<std::array<double, 2>>();
    r.target = {t[0], t[1]};
  }
  read(j, "landing_radius", r.landing_radius);
  read(j, "approach_radius", r.approach_radius);
  read(j, "net_target_offset", r.net_target_offset);
  read(j, "net_band", r.net_band);
  read(j, "jerk_limit", r.jerk_limit);
  read(j, "accel_limit", r.accel_limit);
  read(j, "velocity_limit", r.velocity_limit);
  read(j, "comfort_band", r.comfort_band);
  read(j, "collision_margin", r.collision_margin);
  read(j, "shoulder_margin", r.shoulder_margin);
  read(j, "min_paddle_height", r.min_paddle_height);
  read(j, "min_normal_y", r.min_normal_y);
  return r;
}

inline json latency_to_json(const LatencyModel& m) {
  auto ch = [](const LatencyChannel& c) { return json::array({c.mean_ms, c.spread_ms}); };
  return {{"ball_observation", ch(m.ball_obs)},   {"arm_observation", ch(m.arm_obs)},
          {"gantry_observation", ch(m.gantry_obs)}, {"arm_action", ch(m.arm_action)},
          {"gantry_action", ch(m.gantry_action)},  {"spread_is_variance", m.spread_is_variance},
          {"enabled", m.enabled}};
}

inline LatencyModel latency_from_json(const json& j, LatencyModel m) {
  check_keys(j,
             {"ball_observation", "arm_observation", "gantry_observation", "arm_action", "gantry_action",
              "spread_is_variance", "enabled"},
             "latency");
  auto ch = [&](const char* key, LatencyChannel& c) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::array<double, 2>>();
    c = {v[0], v[1]};
  };
  ch("ball_observation", m.ball_obs);
  ch("arm_observation", m.arm_obs);
  ch("gantry_observation", m.gantry_obs);
  ch("arm_action", m.arm_action);
  ch("gantry_action", m.gantry_action);
  read(j, "spread_is_variance", m.spread_is_variance);
  read(j, "enabled", m.enabled);
  return m;
}

}  // namespace detail

inline PhaseSchedule schedule_preset(const std::string& name) {
  if (name == "desk") return PhaseSchedule::desk();
  if (name == "paper") return PhaseSchedule::paper();
  throw ValidationError("unknown schedule preset '" + name + "' (expected desk or paper)");
}

inline json to_json(const ExperimentConfig& c) {
  const auto& p = c.env.physics;
  const auto& t = c.env.table;
  const auto& s = c.schedule;
  return {
      {"schema_version", c.schema_version},
      {"mode", to_string(c.mode)},
      {"master_seed", c.master_seed},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"physics",
       {{"gravity_z", p.gravity_z}, {"drag_coefficient", p.drag_coefficient}, {"air_density", p.air_density},
        {"ball_mass", p.ball_mass}, {"cross_section", p.cross_section}, {"table_restitution", p.table_restitution},
        {"table_friction", p.table_friction}, {"paddle_restitution", p.paddle_restitution},
        {"paddle_radius", p.paddle_radius}, {"ball_diameter", p.ball_diameter}}},
      {"table",
       {{"half_length", t.half_length}, {"half_width", t.half_width}, {"net_height", t.net_height},
        {"net_overhang", t.net_overhang}, {"floor_z", t.floor_z}}},
      {"robot",
       {{"home", c.env.robot.home}, {"lower", c.env.robot.lower}, {"upper", c.env.robot.upper},
        {"paddle_tilt", c.env.robot.paddle_tilt}}},
      {"action_limits", {{"prismatic", c.env.limits.prismatic}, {"revolute", c.env.limits.revolute}}},
      {"latency", detail::latency_to_json(c.env.latency)},
      {"observation_noise", c.env.obs_noise},
      {"perception_noise", c.perception_noise},
      {"rewards", {{"sim", detail::rewards_to_json(c.sim_rewards)}, {"real", detail::rewards_to_json(c.real_rewards)}}},
      {"es", {{"sim", detail::es_to_json(s.sim_es)}, {"real", detail::es_to_json(s.real_es)}}},
      {"schedule",
       {{"preset", c.schedule_preset},
        {"iterations", s.iterations},
        {"first_sim_updates", s.first_sim_updates},
        {"later_sim_updates", s.later_sim_updates},
        {"finetune_updates", s.finetune_updates},
        {"oracle_finetune_updates", s.oracle_finetune_updates},
        {"seed_candidates", s.seed_candidates},
        {"selection_episodes", s.selection_episodes},
        {"eval_episodes", s.eval_episodes},
        {"bootstrap_throws", s.bootstrap_throws},
        {"continue_from_sim", s.continue_from_sim}}},
      {"surrogate",
       {{"skill", to_string(c.surrogate.skill)}, {"coupling", c.surrogate.coupling},
        {"speed_clamp", c.surrogate.speed_clamp}, {"miss_probability", c.surrogate.miss_probability},
        {"responsive", c.surrogate.responsive}}},
      {"cluster", {{"eps", c.cluster.eps}, {"min_pts", c.cluster.min_pts}}},
      {"fixed_distribution", c.fixed_distribution},
      {"evaluation", {{"rallies", c.eval_rallies}, {"rally_cap", c.rally_cap}}},
  };
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read;
  check_keys(j,
             {"schema_version", "mode", "master_seed", "output_dir", "threads", "physics", "table", "robot",
              "action_limits", "latency", "observation_noise", "perception_noise", "rewards", "es", "schedule",
              "surrogate", "cluster", "fixed_distribution", "evaluation"},
             "config");
  ExperimentConfig c;
  if (!j.contains("schema_version")) throw ValidationError("config is missing schema_version");
  read(j, "schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ValidationError("unsupported schema_version " + std::to_string(c.schema_version));
  if (j.contains("mode")) c.mode = run_mode_from_string(j.at("mode").get<std::string>());
  read(j, "master_seed", c.master_seed);
  read(j, "output_dir", c.output_dir);
  read(j, "threads", c.threads);
  if (j.contains("physics")) {
    const auto& p = j.at("physics");
    check_keys(p,
               {"gravity_z", "drag_coefficient", "air_density", "ball_mass", "cross_section", "table_restitution",
                "table_friction", "paddle_restitution", "paddle_radius", "ball_diameter"},
               "physics");
    auto& q = c.env.physics;
    read(p, "gravity_z", q.gravity_z);
    read(p, "drag_coefficient", q.drag_coefficient);
    read(p, "air_density", q.air_density);
    read(p, "ball_mass", q.ball_mass);
    read(p, "cross_section", q.cross_section);
    read(p, "table_restitution", q.table_restitution);
    read(p, "table_friction", q.table_friction);
    read(p, "paddle_restitution", q.paddle_restitution);
    read(p, "paddle_radius", q.paddle_radius);
    read(p, "ball_diameter", q.ball_diameter);
  }
  if (j.contains("table")) {
    const auto& t = j.at("table");
    check_keys(t, {"half_length", "half_width", "net_height", "net_overhang", "floor_z"}, "table");
    read(t, "half_length", c.env.table.half_length);
    read(t, "half_width", c.env.table.half_width);
    read(t, "net_height", c.env.table.net_height);
    read(t, "net_overhang", c.env.table.net_overhang);
    read(t, "floor_z", c.env.table.floor_z);
  }
  if (j.contains("robot")) {
    const auto& r = j.at("robot");
    check_keys(r, {"home", "lower", "upper", "paddle_tilt"}, "robot");
    read(r, "home", c.env.robot.home);
    read(r, "lower", c.env.robot.lower);
    read(r, "upper", c.env.robot.upper);
    read(r, "paddle_tilt", c.env.robot.paddle_tilt);
  }
  if (j.contains("action_limits")) {
    const auto& a = j.at("action_limits");
    check_keys(a, {"prismatic", "revolute"}, "action_limits");
    read(a, "prismatic", c.env.limits.prismatic);
    read(a, "revolute", c.env.limits.revolute);
  }
  if (j.contains("latency")) c.env.latency = detail::latency_from_json(j.at("latency"), c.env.latency);
  read(j, "observation_noise", c.env.obs_noise);
  read(j, "perception_noise", c.perception_noise);
  if (j.contains("rewards")) {
    const auto& r = j.at("rewards");
    check_keys(r, {"sim", "real"}, "rewards");
    if (r.contains("sim")) c.sim_rewards = detail::rewards_from_json(r.at("sim"), c.sim_rewards);
    if (r.contains("real")) c.real_rewards = detail::rewards_from_json(r.at("real"), c.real_rewards);
  }
  // The schedule preset supplies defaults for both the schedule and the ES columns.
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s,
               {"preset", "iterations", "first_sim_updates", "later_sim_updates", "finetune_updates",
                "oracle_finetune_updates", "seed_candidates", "selection_episodes", "eval_episodes",
                "bootstrap_throws", "continue_from_sim"},
               "schedule");
    read(s, "preset", c.schedule_preset);
    c.schedule = schedule_preset(c.schedule_preset);
    read(s, "iterations", c.schedule.iterations);
    read(s, "first_sim_updates", c.schedule.first_sim_updates);
    read(s, "later_sim_updates", c.schedule.later_sim_updates);
    read(s, "finetune_updates", c.schedule.finetune_updates);
    read(s, "oracle_finetune_updates", c.schedule.oracle_finetune_updates);
    read(s, "seed_candidates", c.schedule.seed_candidates);
    read(s, "selection_episodes", c.schedule.selection_episodes);
    read(s, "eval_episodes", c.schedule.eval_episodes);
    read(s, "bootstrap_throws", c.schedule.bootstrap_throws);
    read(s, "continue_from_sim", c.schedule.continue_from_sim);
  }
  if (j.contains("es")) {
    const auto& e = j.at("es");
    check_keys(e, {"sim", "real"}, "es");
    if (e.contains("sim")) c.schedule.sim_es = detail::es_from_json(e.at("sim"), c.schedule.sim_es);
    if (e.contains("real")) c.schedule.real_es = detail::es_from_json(e.at("real"), c.schedule.real_es);
  }
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    check_keys(s, {"skill", "coupling", "speed_clamp", "miss_probability", "responsive"}, "surrogate");
    if (s.contains("skill")) c.surrogate.skill = skill_from_string(s.at("skill").get<std::string>());
    read(s, "coupling", c.surrogate.coupling);
    read(s, "speed_clamp", c.surrogate.speed_clamp);
    read(s, "miss_probability", c.surrogate.miss_probability);
    read(s, "responsive", c.surrogate.responsive);
  }
  if (j.contains("cluster")) {
    const auto& k = j.at("cluster");
    check_keys(k, {"eps", "min_pts"}, "cluster");
    read(k, "eps", c.cluster.eps);
    read(k, "min_pts", c.cluster.min_pts);
  }
  read(j, "fixed_distribution", c.fixed_distribution);
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, {"rallies", "rally_cap"}, "evaluation");
    read(e, "rallies", c.eval_rallies);
    read(e, "rally_cap", c.rally_cap);
  }
  c.schedule.sim_es.threads = c.threads;
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace is2r
