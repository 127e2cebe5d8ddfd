#pragma once

// Experiment orchestration over an output directory. Every phase reads its
// inputs from disk and writes its outputs atomically, then records itself in
// manifest.json; a rerun skips recorded phases, so an interrupted run resumes
// at the next phase boundary with identical results.
//
// Layout:
//   config.json                    snapshot of the validated config
//   manifest.json                  completed phases, in order
//   datasets/D<i>.jsonl            trajectory datasets
//   distributions/M<i>.json        behaviour models (16 fields)
//   reports/fit_M<i>.json          per-trajectory fit status of each model
//   checkpoints/<name>.ckpt        theta_<i>S, theta_<i>R, s2rft_R, oracle_S, oracle_R, fixed_S
//   metrics/<phase>.csv            one row per ES update
//   reports/<phase>.json           evaluations and the run summary

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "is2r/config.hpp"
#include "is2r/humanmodel.hpp"
#include "is2r/io.hpp"
#include "is2r/loop.hpp"

namespace is2r {

namespace fs = std::filesystem;

// Phase seed tags.
enum : std::uint64_t {
  kTagBootstrap = 0xB007,
  kTagInit = 0x1417,
  kTagSim = 0x5100,
  kTagSelect = 0x5E1E,
  kTagEval = 0xE7A1,
  kTagFinetune = 0xF17E,
  kTagRender = 0x4E4D,
  kTagRally = 0x4A11,
  kTagS2RFT = 0x52F7,
  kTagOracle = 0x0AC1,
  kTagFixed = 0xF1ED,
};

// Thrown by Experiment::run when the phase budget given to it is used up.
class Interrupted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Manifest {
  int schema_version = kSchemaVersion;
  std::uint64_t master_seed = 0;
  std::vector<std::string> completed;

  bool done(const std::string& phase) const {
    return std::find(completed.begin(), completed.end(), phase) != completed.end();
  }
};

inline json to_json(const Manifest& m) {
  return {{"schema_version", m.schema_version}, {"master_seed", m.master_seed}, {"completed", m.completed}};
}

inline Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.schema_version = j.at("schema_version").get<int>();
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.completed = j.at("completed").get<std::vector<std::string>>();
  return m;
}

class Experiment {
 public:
  Experiment(ExperimentConfig config, fs::path dir) : cfg_(std::move(config)), dir_(std::move(dir)) {
    cfg_.validate();
    human_cfg_ = cfg_.surrogate;
  }

  const ExperimentConfig& config() const { return cfg_; }
  const fs::path& dir() const { return dir_; }

  // Stop with Interrupted after this many newly completed phases (testing resume).
  void set_phase_budget(std::optional<std::size_t> n) { budget_ = n; }
  void set_log(std::function<void(const std::string&)> log) { log_ = std::move(log); }

  void run() {
    open();
    switch (cfg_.mode) {
      case RunMode::kIS2R: run_is2r(); break;
      case RunMode::kS2RFT: run_s2rft(); break;
      case RunMode::kOracle: run_oracle(); break;
      case RunMode::kFixed: run_fixed(); break;
      case RunMode::kAll:
        run_is2r();
        run_s2rft();
        run_oracle();
        break;
    }
    write_summary();
  }

  // Paths.
  fs::path dataset_path(std::size_t i) const { return dir_ / "datasets" / ("D" + std::to_string(i) + ".jsonl"); }
  fs::path model_path(std::size_t i) const { return dir_ / "distributions" / ("M" + std::to_string(i) + ".json"); }
  fs::path checkpoint_path(const std::string& name) const { return dir_ / "checkpoints" / (name + ".ckpt"); }
  fs::path metrics_path(const std::string& phase) const { return dir_ / "metrics" / (phase + ".csv"); }
  fs::path report_path(const std::string& name) const { return dir_ / "reports" / (name + ".json"); }
  fs::path manifest_path() const { return dir_ / "manifest.json"; }

  Manifest manifest() const { return manifest_; }

 private:
  SurrogateHuman human() const {
    return SurrogateHuman::from_skill(human_cfg_, cfg_.env.physics, cfg_.env.table);
  }

  std::uint64_t seed(std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0) const {
    return derive_seed(cfg_.master_seed, tag, a, b);
  }

  void log(const std::string& s) const {
    if (log_) log_(s);
  }

  void open() {
    const std::string snapshot = to_json(cfg_).dump(2) + "\n";
    fs::create_directories(dir_);
    const fs::path cp = dir_ / "config.json";
    if (fs::exists(cp)) {
      // Compare structurally; a different output_dir string alone is not a conflict.
      json a = json::parse(read_text(cp));
      json b = to_json(cfg_);
      a.erase("output_dir");
      b.erase("output_dir");
      a.erase("threads");
      b.erase("threads");
      if (a != b) throw ValidationError(dir_.string() + " holds a different experiment (config.json differs)");
    } else {
      write_text(cp, snapshot);
    }
    if (fs::exists(manifest_path())) {
      manifest_ = manifest_from_json(json::parse(read_text(manifest_path())));
      if (manifest_.master_seed != cfg_.master_seed) throw ValidationError("manifest seed does not match config");
    } else {
      manifest_.master_seed = cfg_.master_seed;
      write_text(manifest_path(), to_json(manifest_).dump(2) + "\n");
    }
  }

  template <typename F>
  void phase(const std::string& name, F&& body) {
    if (manifest_.done(name)) return;
    if (budget_ && *budget_ == 0) throw Interrupted("phase budget exhausted before " + name);
    log("phase " + name);
    body();
    manifest_.completed.push_back(name);
    write_text(manifest_path(), to_json(manifest_).dump(2) + "\n");
    if (budget_) --*budget_;
  }

  void save_policy(const std::string& name, const PolicyState& p, int iteration) const {
    save_checkpoint(checkpoint_path(name), Checkpoint{p.params, p.normalizer, iteration, name});
  }
  PolicyState load_policy(const std::string& name) const {
    const Checkpoint c = load_checkpoint(checkpoint_path(name));
    return {c.params, c.normalizer};
  }

  EstimateOptions estimate_options() const {
    EstimateOptions o;
    o.cluster = cfg_.cluster;
    o.threads = cfg_.threads;
    return o;
  }

  // Fits are cached by record index: datasets only ever grow by appending.
  EstimateReport estimate(const TrajectoryDataset& d) {
    const auto opts = estimate_options();
    if (fit_cache_.size() > d.size()) fit_cache_.clear();
    TrajectoryDataset fresh;
    fresh.records.assign(d.records.begin() + static_cast<long>(fit_cache_.size()), d.records.end());
    auto more = fit_dataset(fresh, cfg_.env.physics, cfg_.env.table, opts);
    fit_cache_.insert(fit_cache_.end(), more.begin(), more.end());
    return estimate_from_fits(fit_cache_, opts.cluster);
  }

  void write_model(std::size_t i, const TrajectoryDataset& d) {
    EstimateReport rep;
    try {
      rep = estimate(d);
    } catch (const DistributionCollapse& e) {
      throw DistributionCollapse("iteration " + std::to_string(i) + ": " + e.what());
    }
    json status = json::array();
    for (auto s : rep.status) status.push_back(to_string(s));
    write_text(report_path("fit_M" + std::to_string(i)),
               json{{"model", "M" + std::to_string(i)},
                    {"trajectories", d.size()},
                    {"used", rep.used},
                    {"clusters", rep.clusters},
                    {"status", status},
                    {"diagnostics", rep.diagnostics}}
                       .dump(2) +
                   "\n");
    save_distribution(model_path(i), rep.distribution);
  }

  void write_metrics(const std::string& phase, const CsvTable& t) const { write_text(metrics_path(phase), t.str()); }

  void write_report(const std::string& name, const json& j) const { write_text(report_path(name), j.dump(2) + "\n"); }

  static json scores_json(const std::vector<int>& s) {
    double m = 0.0;
    for (int v : s) m += v;
    return {{"episodes", s.size()}, {"mean_sparse_score", s.empty() ? 0.0 : m / static_cast<double>(s.size())}, {"scores", s}};
  }

  static json rally_json(const RallyReport& r) {
    json scores = r.robot_scores;
    return {{"rallies", r.lengths.size()}, {"mean_length", r.mean_length()}, {"lengths", r.lengths},
            {"censored", r.censored}, {"robot_scores", scores}};
  }

  // Sim phase from a starting policy against a stored model.
  PolicyState sim_phase(const PolicyState& start, const BallDistribution& model, std::size_t updates,
                        std::uint64_t phase_seed, const std::string& metrics_name) {
    CsvTable metrics(metrics_header());
    PolicyState out = train_sim(start, model, updates, cfg_.schedule.sim_es, cfg_.sim_env(), phase_seed, &metrics);
    write_metrics(metrics_name, metrics);
    return out;
  }

  // First sim phase: train `seed_candidates` policies from random inits and
  // keep the one with the best sparse score against the player.
  PolicyState first_sim_phase(const BallDistribution& model) {
    const auto& s = cfg_.schedule;
    std::vector<PolicyState> cands;
    std::vector<double> means;
    json selection = json::array();
    for (std::size_t c = 0; c < s.seed_candidates; ++c) {
      const std::string name = s.seed_candidates == 1 ? "sim0" : "sim0_seed" + std::to_string(c);
      cands.push_back(sim_phase(initial_policy(seed(kTagInit, c)), model, s.first_sim_updates, seed(kTagSim, 0, c), name));
      if (s.seed_candidates > 1) {
        SurrogateHuman h = human();
        const auto ev = evaluate_sparse(cands.back(), h, s.selection_episodes, cfg_.real_env(), seed(kTagSelect, c));
        means.push_back(ev.mean());
        selection.push_back(scores_json(ev.scores));
      }
    }
    const std::size_t best = s.seed_candidates > 1 ? select_seed_model(means) : 0;
    if (s.seed_candidates > 1) write_report("seed_selection", {{"selected", best}, {"candidates", selection}});
    return cands[best];
  }

  void bootstrap_phase() {
    phase("bootstrap", [&] {
      const TrajectoryDataset d0 = bootstrap_dataset(human(), cfg_.schedule.bootstrap_throws, seed(kTagBootstrap),
                                                     cfg_.perception_noise, cfg_.env.physics, cfg_.env.table,
                                                     cfg_.cluster.min_pts);
      save_dataset(dataset_path(0), d0);
    });
    phase("M0", [&] { write_model(0, load_dataset(dataset_path(0))); });
  }

  void sim0_phase() {
    bootstrap_phase();
    phase("theta_0S", [&] { save_policy("theta_0S", first_sim_phase(load_distribution(model_path(0))), 0); });
  }

  void run_is2r() {
    const auto& s = cfg_.schedule;
    sim0_phase();
    for (std::size_t i = 0; i < s.iterations; ++i) {
      const std::string is = std::to_string(i);
      if (i > 0) {
        phase("theta_" + is + "S", [&] {
          const std::string from = "theta_" + std::to_string(i - 1) + (s.continue_from_sim ? "S" : "R");
          const PolicyState p = sim_phase(load_policy(from), load_distribution(model_path(i)), s.later_sim_updates,
                                          seed(kTagSim, i), "sim" + is);
          save_policy("theta_" + is + "S", p, static_cast<int>(i));
        });
      }
      // Zero-shot check against the player; its throws join the dataset.
      phase("eval" + is, [&] {
        SurrogateHuman h = human();
        const auto ev = evaluate_sparse(load_policy("theta_" + is + "S"), h, s.eval_episodes, cfg_.real_env(),
                                        seed(kTagEval, i));
        json j = scores_json(ev.scores);
        json throws = json::array();
        for (const auto& e : ev.episodes) throws.push_back(to_json(e));
        j["episodes_detail"] = throws;
        write_report("eval" + is, j);
      });
      phase("theta_" + is + "R", [&] {
        SurrogateHuman h = human();
        CsvTable metrics(metrics_header());
        FinetuneResult ft = finetune(load_policy("theta_" + is + "S"), h, s.finetune_updates[i], s.real_es,
                                     cfg_.real_env(), seed(kTagFinetune, i), &metrics);
        write_metrics("ft" + is, metrics);
        save_policy("theta_" + is + "R", ft.policy, static_cast<int>(i));

        // D_{i+1} = D_i plus every throw the player made in this iteration.
        std::vector<ThrowSample> throws = eval_throws(i);
        throws.insert(throws.end(), ft.throws.begin(), ft.throws.end());
        TrajectoryDataset d = load_dataset(dataset_path(i));
        const TrajectoryDataset extra =
            render_throws(throws, "player" + std::to_string(human_cfg_.player()), static_cast<int>(i + 1),
                          TrajectorySource::kFineTune, cfg_.perception_noise, seed(kTagRender, i), cfg_.env.physics,
                          cfg_.env.table);
        d.append(extra);
        save_dataset(dataset_path(i + 1), d);
        write_report("ft" + is, scores_json(ft.sparse_scores));
      });
      phase("M" + std::to_string(i + 1), [&] { write_model(i + 1, load_dataset(dataset_path(i + 1))); });
    }
    const std::string last = "theta_" + std::to_string(s.iterations - 1) + "R";
    phase("rally_is2r", [&] { rally_phase("rally_is2r", load_policy(last)); });
  }

  std::vector<ThrowSample> eval_throws(std::size_t i) const {
    const json j = json::parse(read_text(report_path("eval" + std::to_string(i))));
    std::vector<ThrowSample> out;
    for (const auto& e : j.at("episodes_detail")) {
      const auto& t = e.at("throw");
      ThrowSample s;
      const auto p = t.at("position").get<std::array<double, 3>>();
      const auto v = t.at("velocity").get<std::array<double, 3>>();
      const auto l = t.at("landing").get<std::array<double, 2>>();
      s.init.position = {p[0], p[1], p[2]};
      s.init.velocity = {v[0], v[1], v[2]};
      s.landing = {l[0], l[1]};
      out.push_back(s);
    }
    return out;
  }

  void rally_phase(const std::string& name, const PolicyState& p) {
    SurrogateHuman h = human();
    const RallyReport r = rally_eval(p, h, cfg_.eval_rallies, cfg_.real_env(), seed(kTagRally), cfg_.rally_cap);
    write_report(name, rally_json(r));
  }

  void run_s2rft() {
    const auto& s = cfg_.schedule;
    sim0_phase();
    phase("s2rft_R", [&] {
      SurrogateHuman h = human();
      CsvTable metrics(metrics_header());
      FinetuneResult ft = finetune(load_policy("theta_0S"), h, s.total_finetune(), s.real_es, cfg_.real_env(),
                                   seed(kTagS2RFT), &metrics);
      write_metrics("s2rft_ft", metrics);
      save_policy("s2rft_R", ft.policy, 0);
      write_report("s2rft_ft", scores_json(ft.sparse_scores));
    });
    phase("rally_s2rft", [&] { rally_phase("rally_s2rft", load_policy("s2rft_R")); });
  }

  void run_oracle() {
    const auto& s = cfg_.schedule;
    const fs::path penultimate = model_path(s.iterations - 1);
    if (!manifest_.done("M" + std::to_string(s.iterations - 1)) || !fs::exists(penultimate))
      throw ValidationError("oracle baseline needs the penultimate model " + penultimate.string() +
                            " from a completed i-S2R run");
    phase("oracle_S", [&] {
      const PolicyState p = sim_phase(initial_policy(seed(kTagInit, 0)), load_distribution(penultimate),
                                      s.first_sim_updates, seed(kTagOracle, 0), "oracle_sim");
      save_policy("oracle_S", p, static_cast<int>(s.iterations - 1));
    });
    phase("oracle_R", [&] {
      SurrogateHuman h = human();
      CsvTable metrics(metrics_header());
      FinetuneResult ft = finetune(load_policy("oracle_S"), h, s.oracle_finetune_updates, s.real_es, cfg_.real_env(),
                                   seed(kTagOracle, 1), &metrics);
      write_metrics("oracle_ft", metrics);
      save_policy("oracle_R", ft.policy, static_cast<int>(s.iterations - 1));
      write_report("oracle_ft", scores_json(ft.sparse_scores));
    });
    phase("rally_oracle", [&] { rally_phase("rally_oracle", load_policy("oracle_R")); });
  }

  void run_fixed() {
    const auto& s = cfg_.schedule;
    const BallDistribution model = presets::by_name(cfg_.fixed_distribution);
    phase("fixed_S", [&] {
      const PolicyState p =
          sim_phase(initial_policy(seed(kTagInit, 0)), model, s.first_sim_updates, seed(kTagFixed, 0), "fixed_sim");
      save_policy("fixed_S", p, 0);
    });
    phase("fixed_eval", [&] {
      const auto ev = evaluate_on_model(load_policy("fixed_S"), model, s.selection_episodes, cfg_.sim_env(),
                                        seed(kTagFixed, 1));
      write_report("fixed_eval", scores_json(ev.scores));
    });
  }

  // Collected from whatever reports exist; cheap, so always rewritten.
  void write_summary() const {
    json j = {{"mode", to_string(cfg_.mode)}, {"master_seed", cfg_.master_seed}, {"completed", manifest_.completed}};
    std::vector<BallDistribution> models;
    for (std::size_t i = 0; fs::exists(model_path(i)); ++i) models.push_back(load_distribution(model_path(i)));
    json deltas = json::array();
    for (std::size_t i = 1; i < models.size(); ++i)
      deltas.push_back({{"from", "M" + std::to_string(i - 1)},
                        {"to", "M" + std::to_string(i)},
                        {"summary", distribution_delta(models[i - 1], models[i]).summary}});
    j["model_deltas"] = deltas;

    json rallies = json::object();
    std::vector<double> pool;
    std::map<std::string, std::vector<double>> arms;
    for (const char* arm : {"is2r", "s2rft", "oracle"}) {
      const fs::path p = report_path(std::string("rally_") + arm);
      if (!fs::exists(p)) continue;
      const json r = json::parse(read_text(p));
      auto lengths = r.at("lengths").get<std::vector<double>>();
      arms[arm] = lengths;
      pool.insert(pool.end(), lengths.begin(), lengths.end());
      rallies[arm] = {{"mean_length", r.at("mean_length")}};
    }
    if (!pool.empty()) {
      // Normalised against every rally played in this run.
      double mean = 0.0, var = 0.0;
      for (double v : pool) mean += v;
      mean /= static_cast<double>(pool.size());
      for (double v : pool) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(pool.size()));
      for (auto& [arm, lengths] : arms) {
        const auto z = normalize_lengths(lengths, mean, sd > 0.0 ? sd : 1.0);
        double m = 0.0;
        for (double v : z) m += v;
        rallies[arm]["mean_normalized_length"] = m / static_cast<double>(z.size());
      }
      rallies["pool"] = {{"mean", mean}, {"std", sd}};
    }
    j["rallies"] = rallies;
    std::vector<std::string> evals = {"fixed_eval"};
    for (std::size_t i = 0; i < cfg_.schedule.iterations; ++i) evals.push_back("eval" + std::to_string(i));
    for (const auto& e : evals) {
      const fs::path p = report_path(e);
      if (fs::exists(p)) j["zero_shot"][e] = json::parse(read_text(p)).at("mean_sparse_score");
    }
    write_text(report_path("summary"), j.dump(2) + "\n");
  }

  ExperimentConfig cfg_;
  fs::path dir_;
  SurrogateConfig human_cfg_;
  Manifest manifest_;
  std::optional<std::size_t> budget_;
  std::function<void(const std::string&)> log_;
  std::vector<FittedThrow> fit_cache_;
};

}  // namespace is2r
