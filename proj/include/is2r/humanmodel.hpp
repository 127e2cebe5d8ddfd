#pragma once

// Human behaviour model: per-trajectory initial-state estimation, outlier
// removal, min/max box extraction, and constrained throw sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "is2r/balldyn.hpp"
#include "is2r/dbscan.hpp"
#include "is2r/distribution.hpp"
#include "is2r/nelder_mead.hpp"
#include "is2r/parallel.hpp"

namespace is2r {

struct ThrowSample {
  BallState init;
  Vec2 landing = Vec2::Zero();
  std::size_t attempts = 1;  // candidates drawn before acceptance
};

struct FitResult {
  BallState init_estimate;
  double residual = 0.0;  // mean Euclidean distance, metres
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t samples_used = 0;
};

class FitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DistributionCollapse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InfeasibleDistribution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrajectorySource { kBootstrap, kFineTune, kSynthetic };

inline const char* to_string(TrajectorySource s) {
  switch (s) {
    case TrajectorySource::kBootstrap: return "bootstrap";
    case TrajectorySource::kFineTune: return "finetune";
    case TrajectorySource::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

inline TrajectorySource source_from_string(const std::string& s) {
  if (s == "bootstrap") return TrajectorySource::kBootstrap;
  if (s == "finetune") return TrajectorySource::kFineTune;
  if (s == "synthetic") return TrajectorySource::kSynthetic;
  throw ValidationError("unknown trajectory source '" + s + "'");
}

struct TrajectoryRecord {
  Trajectory trajectory;
  std::string player_id = "unknown";
  int iteration = 0;
  TrajectorySource source = TrajectorySource::kSynthetic;
};

struct TrajectoryDataset {
  std::vector<TrajectoryRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  void append(const TrajectoryDataset& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
  }
};

// ---------------------------------------------------------------------------
// Trajectory fitting

struct FitOptions {
  NelderMeadOptions simplex = [] {
    NelderMeadOptions o;
    o.tol = 1e-13;
    o.max_iter = 3000;
    o.initial_step = {0.02, 0.02, 0.02, 0.2, 0.2, 0.2};
    return o;
  }();
  std::size_t min_samples = 4;
  double bounce_height = 0.12;       // z below which a local minimum counts as a bounce
  double restart_threshold = 0.05;   // metres
};

// Index of the first sample at or after the first table bounce, or size()
// when no bounce is visible.
inline std::size_t first_bounce_index(const Trajectory& traj, double bounce_height) {
  const auto& s = traj.samples;
  const std::size_t n = s.size();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double z = s[k].position.z();
    if (z >= bounce_height) continue;
    bool is_min = true;
    for (std::size_t j = (k >= 2 ? k - 2 : 0); j <= std::min(n - 1, k + 2); ++j)
      if (s[j].position.z() < z) is_min = false;
    if (is_min) return k;
  }
  return n;
}

namespace detail {

// Simulated positions at each observation time; observations need not lie on
// the integration grid (linear interpolation between grid points).
class FreeFlightResiduals {
 public:
  FreeFlightResiduals(const std::vector<BallState>& obs, const PhysicsConstants& constants, double dt)
      : obs_(obs), constants_(constants), dt_(dt) {
    t0_ = obs.front().time;
    const double span = obs.back().time - t0_;
    steps_ = static_cast<std::size_t>(std::ceil(span / dt_ - 1e-9)) + 1;
  }

  double operator()(const std::vector<double>& x) {
    BallState init;
    init.position = {x[0], x[1], x[2]};
    init.velocity = {x[3], x[4], x[5]};
    if (!init.position.allFinite() || !init.velocity.allFinite()) return std::numeric_limits<double>::infinity();
    integrate_free_flight(init, constants_, dt_, steps_, grid_);
    double total = 0.0;
    for (const auto& o : obs_) {
      const double u = (o.time - t0_) / dt_;
      const double k = std::round(u);
      Vec3 p;
      if (std::abs(u - k) < 1e-6) {
        p = grid_[static_cast<std::size_t>(k)];
      } else {
        const auto lo = static_cast<std::size_t>(std::floor(u));
        const double f = u - static_cast<double>(lo);
        p = grid_[lo] + f * (grid_[lo + 1] - grid_[lo]);
      }
      total += (p - o.position).norm();
    }
    return total / static_cast<double>(obs_.size());
  }

 private:
  const std::vector<BallState>& obs_;
  PhysicsConstants constants_;
  double dt_;
  double t0_ = 0.0;
  std::size_t steps_ = 0;
  std::vector<Vec3> grid_;
};

}  // namespace detail

inline FitResult fit_initial_state(const Trajectory& observed, const PhysicsConstants& constants,
                                   const TableGeometry& table, const FitOptions& options = {}) {
  (void)table;
  if (observed.samples.size() < 2) throw FitError("trajectory rejected: fewer than 2 samples");
  for (const auto& s : observed.samples)
    if (!s.position.allFinite() || !std::isfinite(s.time)) throw FitError("trajectory rejected: non-finite sample");
  const std::size_t cut = first_bounce_index(observed, options.bounce_height);
  if (cut < options.min_samples)
    throw FitError("trajectory rejected: " + std::to_string(cut) + " pre-bounce samples, need " +
                   std::to_string(options.min_samples));
  const std::vector<BallState> free(observed.samples.begin(), observed.samples.begin() + static_cast<long>(cut));
  for (std::size_t i = 1; i < free.size(); ++i)
    if (!(free[i].time > free[i - 1].time)) throw FitError("trajectory rejected: timestamps not increasing");

  const double dt = observed.sample_period > 0.0 ? observed.sample_period : (free[1].time - free[0].time);
  detail::FreeFlightResiduals objective(free, constants, dt);

  const Vec3 v0 = (free[1].position - free[0].position) / (free[1].time - free[0].time);
  const std::vector<double> x0 = {free[0].position.x(), free[0].position.y(), free[0].position.z(),
                                  v0.x(), v0.y(), v0.z()};

  NelderMeadResult best = nelder_mead(objective, x0, options.simplex);
  std::size_t iterations = best.iterations;
  // Restart from the optimum with a fresh simplex; collapsed simplices stall early.
  {
    NelderMeadOptions polish = options.simplex;
    for (auto& s : polish.initial_step) s *= 0.1;
    NelderMeadResult again = nelder_mead(objective, best.x, polish);
    iterations += again.iterations;
    if (again.f <= best.f) best = again;
  }
  if (best.f > options.restart_threshold) {
    std::vector<double> perturbed = x0;
    for (std::size_t i = 0; i < perturbed.size(); ++i)
      perturbed[i] += (i % 2 == 0 ? 1.0 : -1.0) * options.simplex.initial_step[i];
    NelderMeadResult again = nelder_mead(objective, perturbed, options.simplex);
    iterations += again.iterations;
    if (again.f < best.f) best = again;
  }

  FitResult r;
  r.init_estimate.position = {best.x[0], best.x[1], best.x[2]};
  r.init_estimate.velocity = {best.x[3], best.x[4], best.x[5]};
  r.init_estimate.time = free.front().time;
  r.residual = best.f;
  r.iterations = iterations;
  r.converged = best.converged;
  r.samples_used = free.size();
  return r;
}

// ---------------------------------------------------------------------------
// Throw sampling

// First table contact of a throw when it lands on the robot side without
// touching the net first.
inline std::optional<Vec2> robot_side_landing(const BallState& init, const PhysicsConstants& constants,
                                              const TableGeometry& table, double dt = kControlDt,
                                              double horizon = 3.0) {
  const FlightResult flight = simulate_flight(init, constants, dt, horizon, table);
  for (const auto& e : flight.events) {
    if (e.kind == FlightEventKind::kNetCrossing) continue;
    if (e.kind != FlightEventKind::kTableBounce) return std::nullopt;
    if (!table.on_robot_side(e.position.x(), e.position.y())) return std::nullopt;
    return Vec2{e.position.x(), e.position.y()};
  }
  return std::nullopt;
}

inline ThrowSample sample_throw(const BallDistribution& dist, std::uint64_t seed, const PhysicsConstants& constants,
                                const TableGeometry& table, std::size_t max_rejects = 10000, double dt = kControlDt) {
  dist.validate(table);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  for (std::size_t attempt = 1; attempt <= max_rejects + 1; ++attempt) {
    BallState init;
    for (int k = 0; k < 3; ++k) init.position[k] = draw(dist.pos_min[k], dist.pos_max[k]);
    for (int k = 0; k < 3; ++k) init.velocity[k] = draw(dist.vel_min[k], dist.vel_max[k]);
    const auto landing = robot_side_landing(init, constants, table, dt);
    if (landing && dist.contains_landing(*landing)) return {init, *landing, attempt};
  }
  throw InfeasibleDistribution("infeasible distribution: no throw landed in the landing box after " +
                               std::to_string(max_rejects) + " rejections");
}

// ---------------------------------------------------------------------------
// Distribution estimation

struct ClusterOptions {
  double eps = 2.5;       // in z-scored feature units
  std::size_t min_pts = 4;
};

struct EstimateOptions {
  ClusterOptions cluster;
  FitOptions fit;
  double landing_dt = kControlDt;
  std::size_t threads = 1;
};

enum class TrajectoryStatus { kUsed, kNoise, kOtherCluster, kRejectedFit, kNoLanding };

inline const char* to_string(TrajectoryStatus s) {
  switch (s) {
    case TrajectoryStatus::kUsed: return "used";
    case TrajectoryStatus::kNoise: return "noise";
    case TrajectoryStatus::kOtherCluster: return "other_cluster";
    case TrajectoryStatus::kRejectedFit: return "rejected_fit";
    case TrajectoryStatus::kNoLanding: return "no_landing";
  }
  return "used";
}

using Feature = std::array<double, 8>;

// Per-trajectory fit plus landing of the simulated continuation.
struct FittedThrow {
  std::optional<FitResult> fit;
  std::optional<Vec2> landing;
  std::string diagnostic;
};

struct EstimateReport {
  BallDistribution distribution;
  std::vector<TrajectoryStatus> status;
  std::vector<std::string> diagnostics;  // one per rejected trajectory
  std::vector<Feature> features;         // raw 8-d features, aligned with status (zeros if rejected)
  std::size_t clusters = 0;
  std::size_t used = 0;
};

inline FittedThrow fit_throw(const Trajectory& traj, const PhysicsConstants& constants, const TableGeometry& table,
                             const EstimateOptions& options) {
  FittedThrow out;
  try {
    out.fit = fit_initial_state(traj, constants, table, options.fit);
  } catch (const FitError& e) {
    out.diagnostic = e.what();
    return out;
  }
  BallState start = out.fit->init_estimate;
  start.time = 0.0;
  if (start.valid()) out.landing = robot_side_landing(start, constants, table, options.landing_dt);
  if (!out.landing) out.diagnostic = "fitted trajectory does not land on the robot side";
  return out;
}

inline std::vector<FittedThrow> fit_dataset(const TrajectoryDataset& dataset, const PhysicsConstants& constants,
                                            const TableGeometry& table, const EstimateOptions& options = {}) {
  std::vector<FittedThrow> fits(dataset.size());
  parallel_for(dataset.size(), options.threads,
               [&](std::size_t i) { fits[i] = fit_throw(dataset.records[i].trajectory, constants, table, options); });
  return fits;
}

inline EstimateReport estimate_from_fits(const std::vector<FittedThrow>& fits, const ClusterOptions& cluster) {
  EstimateReport report;
  report.status.assign(fits.size(), TrajectoryStatus::kRejectedFit);
  report.features.assign(fits.size(), Feature{});
  std::vector<std::size_t> index;
  std::vector<Feature> points;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    if (!f.fit) {
      report.diagnostics.push_back("trajectory " + std::to_string(i) + ": " + f.diagnostic);
      continue;
    }
    if (!f.landing) {
      report.status[i] = TrajectoryStatus::kNoLanding;
      report.diagnostics.push_back("trajectory " + std::to_string(i) + ": " + f.diagnostic);
      continue;
    }
    const auto& s = f.fit->init_estimate;
    Feature feat = {s.position.x(), s.position.y(), s.position.z(), s.velocity.x(), s.velocity.y(), s.velocity.z(),
                    f.landing->x(), f.landing->y()};
    report.features[i] = feat;
    index.push_back(i);
    points.push_back(feat);
  }
  if (points.size() < cluster.min_pts)
    throw DistributionCollapse("distribution collapse: only " + std::to_string(points.size()) +
                               " usable trajectories, need at least " + std::to_string(cluster.min_pts));

  // Standardise each feature dimension. The scale is IQR / sqrt(3), which is
  // the standard deviation of a uniform box but ignores a minority of far
  // outliers; the plain standard deviation is the fallback for a zero IQR.
  std::vector<Feature> scaled = points;
  for (std::size_t d = 0; d < 8; ++d) {
    std::vector<double> col;
    col.reserve(points.size());
    for (const auto& p : points) col.push_back(p[d]);
    const auto quantile = [&](double q) {
      auto it = col.begin() + static_cast<long>(q * static_cast<double>(col.size() - 1));
      std::nth_element(col.begin(), it, col.end());
      return *it;
    };
    const double median = quantile(0.5);
    double scale = (quantile(0.75) - quantile(0.25)) / std::sqrt(3.0);
    if (!(scale > 1e-12)) {
      double mean = 0.0, var = 0.0;
      for (double v : col) mean += v;
      mean /= static_cast<double>(col.size());
      for (double v : col) var += (v - mean) * (v - mean);
      var /= static_cast<double>(col.size());
      scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    for (auto& p : scaled) p[d] = (p[d] - median) / scale;
  }

  const std::vector<int> labels = dbscan(scaled, cluster.eps, cluster.min_pts);
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  if (max_label < 0) throw DistributionCollapse("distribution collapse: every trajectory was labelled noise");
  report.clusters = static_cast<std::size_t>(max_label + 1);
  std::vector<std::size_t> counts(report.clusters, 0);
  for (int l : labels)
    if (l >= 0) ++counts[static_cast<std::size_t>(l)];
  const auto chosen = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  Feature lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const std::size_t i = index[k];
    if (labels[k] == kNoise) {
      report.status[i] = TrajectoryStatus::kNoise;
      continue;
    }
    if (labels[k] != chosen) {
      report.status[i] = TrajectoryStatus::kOtherCluster;
      continue;
    }
    report.status[i] = TrajectoryStatus::kUsed;
    ++report.used;
    for (std::size_t d = 0; d < 8; ++d) {
      lo[d] = std::min(lo[d], points[k][d]);
      hi[d] = std::max(hi[d], points[k][d]);
    }
  }
  auto& dist = report.distribution;
  dist.pos_min = {lo[0], lo[1], lo[2]};
  dist.pos_max = {hi[0], hi[1], hi[2]};
  dist.vel_min = {lo[3], lo[4], lo[5]};
  dist.vel_max = {hi[3], hi[4], hi[5]};
  dist.land_min = {lo[6], lo[7]};
  dist.land_max = {hi[6], hi[7]};
  return report;
}

inline EstimateReport estimate_distribution_report(const TrajectoryDataset& dataset, const PhysicsConstants& constants,
                                                   const TableGeometry& table, const EstimateOptions& options = {}) {
  if (dataset.empty()) throw DistributionCollapse("distribution collapse: empty dataset");
  return estimate_from_fits(fit_dataset(dataset, constants, table, options), options.cluster);
}

inline BallDistribution estimate_distribution(const TrajectoryDataset& dataset, const PhysicsConstants& constants,
                                              const TableGeometry& table, const EstimateOptions& options = {}) {
  return estimate_distribution_report(dataset, constants, table, options).distribution;
}

// ---------------------------------------------------------------------------

struct DistributionDelta {
  std::array<double, BallDistribution::kSize> per_field{};
  double summary = 0.0;  // mean |delta| over fields, each normalised by b's width of that quantity
};

inline DistributionDelta distribution_delta(const BallDistribution& a, const BallDistribution& b) {
  DistributionDelta out;
  const auto av = a.to_array();
  const auto bv = b.to_array();
  double sum = 0.0;
  for (std::size_t i = 0; i < BallDistribution::kSize; ++i) {
    out.per_field[i] = std::abs(av[i] - bv[i]);
    sum += out.per_field[i] / std::max(b.range_of_field(i), 1e-6);
  }
  out.summary = sum / static_cast<double>(BallDistribution::kSize);
  return out;
}

// Renders a throw as an observation-rate trajectory, optionally with uniform
// per-axis position noise. The trajectory runs until `after_bounce` seconds
// past the first table contact (or the horizon).
inline Trajectory render_trajectory(const BallState& init, const PhysicsConstants& constants,
                                    const TableGeometry& table, std::uint64_t noise_seed, double noise_amplitude,
                                    double dt = kPerceptionDt, double after_bounce = 0.08, double horizon = 2.0) {
  const FlightResult flight = simulate_flight(init, constants, dt, horizon, table);
  double end_time = flight.trajectory.samples.back().time;
  if (const auto b = flight.first(FlightEventKind::kTableBounce)) end_time = std::min(end_time, b->time + after_bounce);
  Trajectory out;
  out.sample_period = dt;
  std::mt19937_64 rng(noise_seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (const auto& s : flight.trajectory.samples) {
    if (s.time > end_time + 1e-12) break;
    BallState o = s;
    if (noise_amplitude > 0.0)
      for (int k = 0; k < 3; ++k) o.position[k] += noise_amplitude * noise(rng);
    o.velocity.setZero();
    out.samples.push_back(o);
  }
  return out;
}

// Labelled synthetic data: inlier throws from `box` plus a fraction of
// outliers drawn from `outlier_box` and kept only if some initial position or
// velocity coordinate lies at least `min_offset` box widths outside `box`.
struct SyntheticDataset {
  TrajectoryDataset dataset;
  std::vector<ThrowSample> throws;
  std::vector<bool> outlier;
};

inline SyntheticDataset synthetic_dataset(const BallDistribution& box, std::size_t n, std::uint64_t seed, double noise,
                                          double outlier_fraction, const PhysicsConstants& constants,
                                          const TableGeometry& table, const BallDistribution& outlier_box,
                                          double min_offset = 1.0) {
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) throw ValidationError("outlier_fraction must be in [0,1)");
  const auto n_out = static_cast<std::size_t>(std::llround(outlier_fraction * static_cast<double>(n)));
  std::vector<bool> is_out(n, false);
  std::fill(is_out.begin(), is_out.begin() + static_cast<long>(n_out), true);
  std::shuffle(is_out.begin(), is_out.end(), std::mt19937_64(derive_seed(seed, 0x5F)));

  auto offset = [&](const BallState& s) {
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double wp = std::max(box.pos_max[k] - box.pos_min[k], 1e-6);
      const double wv = std::max(box.vel_max[k] - box.vel_min[k], 1e-6);
      worst = std::max({worst, (box.pos_min[k] - s.position[k]) / wp, (s.position[k] - box.pos_max[k]) / wp,
                        (box.vel_min[k] - s.velocity[k]) / wv, (s.velocity[k] - box.vel_max[k]) / wv});
    }
    return worst;
  };

  SyntheticDataset out;
  for (std::size_t i = 0; i < n; ++i) {
    ThrowSample t;
    if (!is_out[i]) {
      t = sample_throw(box, derive_seed(seed, i), constants, table);
    } else {
      std::size_t tries = 0;
      do {
        if (++tries > 10000) throw InfeasibleDistribution("synthetic_dataset: no outlier far enough from the box");
        t = sample_throw(outlier_box, derive_seed(seed, i, tries), constants, table);
      } while (offset(t.init) < min_offset);
    }
    TrajectoryRecord r;
    r.trajectory = render_trajectory(t.init, constants, table, derive_seed(seed, i, 0x40), noise);
    r.source = TrajectorySource::kSynthetic;
    out.dataset.records.push_back(std::move(r));
    out.throws.push_back(t);
    out.outlier.push_back(is_out[i]);
  }
  return out;
}

}  // namespace is2r
