// is2r: command-line front end.
//
//   is2r fit DATASET.jsonl [--out M.json] [--report R.json]
//   is2r sample (--preset NAME | --distribution M.json) [-n 100] [--seed 1] [--noise 0.01] [--outliers 0] --out D.jsonl
//   is2r train CONFIG.json [--output-dir DIR] [--mode MODE] [--seed S] [--dump-config]
//   is2r eval --checkpoint C.ckpt [--config CONFIG.json] [-n 50] [--seed 1] [--heatmap H.csv] [--out R.json]
//   is2r report DIR
//
// Relative output paths resolve against $IS2R_OUTPUT_ROOT when it is set.
// Exit codes: 0 ok, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "is2r/config.hpp"
#include "is2r/experiment.hpp"
#include "is2r/humanmodel.hpp"
#include "is2r/io.hpp"
#include "is2r/loop.hpp"

namespace {

using namespace is2r;

fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("IS2R_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  return path;
}

int cmd_fit(const std::string& dataset_path, const std::string& out, const std::string& report_out,
            const ClusterOptions& cluster, std::size_t threads) {
  const TrajectoryDataset d = load_dataset(dataset_path);
  if (d.empty()) throw ValidationError(dataset_path + ": dataset is empty");
  EstimateOptions opts;
  opts.cluster = cluster;
  opts.threads = threads;
  const EstimateReport rep = estimate_distribution_report(d, PhysicsConstants{}, TableGeometry{}, opts);
  json status = json::object();
  for (auto s : {TrajectoryStatus::kUsed, TrajectoryStatus::kNoise, TrajectoryStatus::kOtherCluster,
                 TrajectoryStatus::kRejectedFit, TrajectoryStatus::kNoLanding})
    status[to_string(s)] = 0;
  json noise = json::array();
  for (std::size_t i = 0; i < rep.status.size(); ++i) {
    status[to_string(rep.status[i])] = status[to_string(rep.status[i])].get<int>() + 1;
    if (rep.status[i] == TrajectoryStatus::kNoise) noise.push_back(i);
  }
  const json report = {{"dataset", dataset_path},  {"trajectories", d.size()},
                       {"clusters", rep.clusters}, {"counts", status},
                       {"noise_points", noise},    {"rejected", rep.diagnostics},
                       {"distribution", to_json(rep.distribution)}};
  if (!out.empty()) save_distribution(output_path(out), rep.distribution);
  if (!report_out.empty()) write_text(output_path(report_out), report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_sample(const std::string& preset, const std::string& dist_path, std::size_t n, std::uint64_t seed, double noise,
               double outliers, const std::string& out) {
  if (preset.empty() == dist_path.empty()) throw ValidationError("give exactly one of --preset or --distribution");
  if (n == 0) throw ValidationError("-n must be positive");
  const BallDistribution box = preset.empty() ? load_distribution(dist_path) : presets::by_name(preset);
  const SyntheticDataset s =
      synthetic_dataset(box, n, seed, noise, outliers, PhysicsConstants{}, TableGeometry{}, presets::large());
  save_dataset(output_path(out), s.dataset);
  std::size_t n_out = 0;
  for (bool b : s.outlier) n_out += b;
  std::cout << "wrote " << s.dataset.size() << " trajectories (" << n_out << " outliers) to " << output_path(out).string()
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& output_dir, const std::string& mode,
              std::optional<std::uint64_t> seed, bool dump) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (!mode.empty()) cfg.mode = run_mode_from_string(mode);
  if (seed) cfg.master_seed = *seed;
  cfg.validate();
  if (dump) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return 0;
  }
  Experiment exp(cfg, output_path(cfg.output_dir));
  exp.set_log([](const std::string& s) { std::cerr << s << std::endl; });
  exp.run();
  std::cout << read_text(exp.report_path("summary"));
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, std::size_t n, std::uint64_t seed,
             const std::string& heatmap, const std::string& out) {
  const ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  const Checkpoint c = load_checkpoint(checkpoint);
  const PolicyState p{c.params, c.normalizer};
  SurrogateHuman h = SurrogateHuman::from_skill(cfg.surrogate, cfg.env.physics, cfg.env.table);
  const RallyReport r = rally_eval(p, h, n, cfg.real_env(), seed, cfg.rally_cap);
  std::vector<double> lengths(r.lengths.begin(), r.lengths.end());
  double sparse = 0.0;
  for (int s : r.robot_scores) sparse += s;
  const json report = {{"checkpoint", checkpoint},
                       {"rallies", n},
                       {"mean_length", r.mean_length()},
                       {"lengths", r.lengths},
                       {"censored", r.censored},
                       {"normalized_lengths", normalize_against_pool(lengths)},
                       {"robot_shots", r.robot_scores.size()},
                       {"mean_sparse_score", r.robot_scores.empty() ? 0.0 : sparse / double(r.robot_scores.size())},
                       {"sparse_scores", r.robot_scores}};
  if (!heatmap.empty())
    write_text(output_path(heatmap), heatmap_csv(landing_heatmap(r.incoming_landings, r.robot_scores, cfg.env.table)));
  if (!out.empty()) write_text(output_path(out), report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  const fs::path d(dir);
  if (!fs::exists(d / "manifest.json")) throw ValidationError(dir + " is not an experiment directory (no manifest.json)");
  const json m = json::parse(read_text(d / "manifest.json"));
  std::cout << "completed phases:";
  for (const auto& p : m.at("completed")) std::cout << " " << p.get<std::string>();
  std::cout << "\n";
  if (fs::exists(d / "reports" / "summary.json")) std::cout << read_text(d / "reports" / "summary.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"i-S2R sim-to-sim lab"};
  app.require_subcommand(1);

  std::string dataset, out, report_out, preset, dist_path, config_path, output_dir, mode, checkpoint, heatmap, dir;
  ClusterOptions cluster;
  std::size_t threads = 1, n_sample = 100, n_eval = 50;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> train_seed;
  double noise = 0.01, outliers = 0.0;
  bool dump = false;

  auto* fit = app.add_subcommand("fit", "Estimate a behaviour model from a trajectory dataset");
  fit->add_option("dataset", dataset, "Dataset (JSON lines)")->required();
  fit->add_option("--out", out, "Write the 16-field distribution here");
  fit->add_option("--report", report_out, "Write the fit report here");
  fit->add_option("--eps", cluster.eps, "DBSCAN radius in z-scored units")->capture_default_str();
  fit->add_option("--min-pts", cluster.min_pts, "DBSCAN core size")->capture_default_str();
  fit->add_option("--threads", threads, "Worker threads")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Render synthetic throws from a distribution");
  sample->add_option("--preset", preset, "Distribution preset (large, medium, narrow, s2r_oracle, playerP_mK)");
  sample->add_option("--distribution", dist_path, "Distribution record (JSON)");
  sample->add_option("-n", n_sample, "Number of throws")->capture_default_str();
  sample->add_option("--seed", seed, "Seed")->capture_default_str();
  sample->add_option("--noise", noise, "Uniform per-axis position noise, m")->capture_default_str();
  sample->add_option("--outliers", outliers, "Fraction of planted outliers")->capture_default_str();
  sample->add_option("--out", out, "Output dataset (JSON lines)")->required();

  auto* train = app.add_subcommand("train", "Run or resume an experiment");
  train->add_option("config", config_path, "Experiment config (JSON); defaults apply when omitted");
  train->add_option("--output-dir", output_dir, "Override the config's output_dir");
  train->add_option("--mode", mode, "is2r, s2rft, oracle, all, fixed");
  train->add_option("--seed", train_seed, "Override the master seed");
  train->add_flag("--dump-config", dump, "Print the effective config and exit");

  auto* eval = app.add_subcommand("eval", "Rally evaluation of a checkpoint against the surrogate player");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--config", config_path, "Experiment config (JSON)");
  eval->add_option("-n", n_eval, "Number of rallies")->capture_default_str();
  eval->add_option("--seed", seed, "Seed")->capture_default_str();
  eval->add_option("--heatmap", heatmap, "Write the 3x3-of-3x3 hit-rate grid (CSV)");
  eval->add_option("--out", out, "Write the report (JSON)");

  auto* report = app.add_subcommand("report", "Summarise an experiment directory");
  report->add_option("dir", dir, "Experiment directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(dataset, out, report_out, cluster, threads);
    if (*sample) return cmd_sample(preset, dist_path, n_sample, seed, noise, outliers, out);
    if (*train) return cmd_train(config_path, output_dir, mode, train_seed, dump);
    if (*eval) return cmd_eval(checkpoint, config_path, n_eval, seed, heatmap, out);
    if (*report) return cmd_report(dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
