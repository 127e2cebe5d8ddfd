#pragma once

// Persistence: trajectory datasets (JSON lines), distribution records,
// policy checkpoints (little-endian binary plus a JSON export), metrics CSV.

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "is2r/distribution.hpp"
#include "is2r/env.hpp"
#include "is2r/humanmodel.hpp"
#include "is2r/policy.hpp"

namespace is2r {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exact decimal rendering of a double (round-trips bit for bit).
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Distributions

inline json to_json(const BallDistribution& d) {
  json j = json::object();
  const auto a = d.to_array();
  const auto& names = BallDistribution::field_names();
  for (std::size_t i = 0; i < BallDistribution::kSize; ++i) j[names[i]] = a[i];
  return j;
}

inline BallDistribution distribution_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("distribution record must be an object");
  std::array<double, BallDistribution::kSize> a{};
  const auto& names = BallDistribution::field_names();
  for (std::size_t i = 0; i < BallDistribution::kSize; ++i) {
    if (!j.contains(names[i]) || !j[names[i]].is_number())
      throw ValidationError(std::string("distribution record missing numeric field '") + names[i] + "'");
    a[i] = j[names[i]].get<double>();
  }
  return BallDistribution::from_array(a);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_distribution(const std::filesystem::path& path, const BallDistribution& d) {
  write_text(path, to_json(d).dump(2) + "\n");
}

inline BallDistribution load_distribution(const std::filesystem::path& path) {
  try {
    return distribution_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trajectory datasets, one record per line:
// {"player_id": "...", "iteration": i, "source": "...", "sample_period": dt,
//  "samples": [[t, x, y, z], ...]}

inline json to_json(const TrajectoryRecord& r) {
  json samples = json::array();
  for (const auto& s : r.trajectory.samples)
    samples.push_back({s.time, s.position.x(), s.position.y(), s.position.z()});
  return {{"player_id", r.player_id},
          {"iteration", r.iteration},
          {"source", to_string(r.source)},
          {"sample_period", r.trajectory.sample_period},
          {"samples", samples}};
}

inline TrajectoryRecord trajectory_from_json(const json& j) {
  TrajectoryRecord r;
  r.player_id = j.at("player_id").get<std::string>();
  r.iteration = j.at("iteration").get<int>();
  r.source = source_from_string(j.at("source").get<std::string>());
  r.trajectory.sample_period = j.value("sample_period", kPerceptionDt);
  for (const auto& s : j.at("samples")) {
    if (!s.is_array() || s.size() != 4) throw ValidationError("each sample must be [t, x, y, z]");
    BallState b;
    b.time = s[0].get<double>();
    b.position = {s[1].get<double>(), s[2].get<double>(), s[3].get<double>()};
    r.trajectory.samples.push_back(b);
  }
  r.trajectory.validate();
  return r;
}

inline std::string dataset_to_jsonl(const TrajectoryDataset& d) {
  std::string out;
  for (const auto& r : d.records) out += to_json(r).dump() + "\n";
  return out;
}

inline TrajectoryDataset dataset_from_jsonl(const std::string& text, const std::string& origin = "<memory>") {
  TrajectoryDataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.records.push_back(trajectory_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

inline void save_dataset(const std::filesystem::path& path, const TrajectoryDataset& d) {
  write_text(path, dataset_to_jsonl(d));
}

inline TrajectoryDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_jsonl(read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary layout, all little-endian:
//   char[8]  "IS2RCKPT"
//   u32      version (1)
//   u32      parameter count (976)
//   u32      observation columns (11)
//   i32      iteration
//   u32      phase name length L, then L bytes
//   f64[976] parameters in param_layout() order
//   f64      normalizer count
//   f64[11]  normalizer mean
//   f64[11]  normalizer sum of squared deviations

struct Checkpoint {
  std::vector<double> params;
  Normalizer normalizer;
  int iteration = 0;
  std::string phase;
};

inline constexpr char kCheckpointMagic[8] = {'I', 'S', '2', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ValidationError("checkpoint truncated");
  unsigned char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  if (c.params.size() != kNumParams) throw ValidationError("checkpoint needs exactly 976 parameters");
  std::string out(kCheckpointMagic, 8);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kNumParams));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kObsDim));
  detail::put_le<std::int32_t>(out, c.iteration);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.phase.size()));
  out += c.phase;
  for (double p : c.params) detail::put_le(out, p);
  detail::put_le(out, c.normalizer.count);
  for (double v : c.normalizer.mean) detail::put_le(out, v);
  for (double v : c.normalizer.m2) detail::put_le(out, v);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw ValidationError("not a checkpoint file");
  std::size_t pos = 8;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto n = detail::get_le<std::uint32_t>(bytes, pos);
  const auto cols = detail::get_le<std::uint32_t>(bytes, pos);
  if (n != kNumParams || cols != kObsDim) throw ValidationError("checkpoint shape mismatch");
  Checkpoint c;
  c.iteration = detail::get_le<std::int32_t>(bytes, pos);
  const auto len = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + len > bytes.size()) throw ValidationError("checkpoint truncated");
  c.phase = bytes.substr(pos, len);
  pos += len;
  c.params.resize(n);
  for (auto& p : c.params) p = detail::get_le<double>(bytes, pos);
  c.normalizer.count = detail::get_le<double>(bytes, pos);
  for (auto& v : c.normalizer.mean) v = detail::get_le<double>(bytes, pos);
  for (auto& v : c.normalizer.m2) v = detail::get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw ValidationError("trailing bytes in checkpoint");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_text(path, encode_checkpoint(c)); }
inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_text(path)); }

// Human-readable export; parameters are grouped by layout slice.
inline json checkpoint_to_json(const Checkpoint& c) {
  json params = json::object();
  for (const auto& s : param_layout())
    params[s.name] = std::vector<double>(c.params.begin() + static_cast<long>(s.offset),
                                         c.params.begin() + static_cast<long>(s.offset + s.size));
  return {{"format", "is2r-checkpoint"},
          {"version", kCheckpointVersion},
          {"iteration", c.iteration},
          {"phase", c.phase},
          {"params", params},
          {"normalizer", {{"count", c.normalizer.count}, {"mean", c.normalizer.mean}, {"m2", c.normalizer.m2}}}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  c.iteration = j.at("iteration").get<int>();
  c.phase = j.at("phase").get<std::string>();
  c.params.assign(kNumParams, 0.0);
  for (const auto& s : param_layout()) {
    const auto v = j.at("params").at(s.name).get<std::vector<double>>();
    if (v.size() != s.size) throw ValidationError("checkpoint slice '" + s.name + "' has wrong length");
    std::copy(v.begin(), v.end(), c.params.begin() + static_cast<long>(s.offset));
  }
  c.normalizer.count = j.at("normalizer").at("count").get<double>();
  c.normalizer.mean = j.at("normalizer").at("mean").get<std::array<double, kObsDim>>();
  c.normalizer.m2 = j.at("normalizer").at("m2").get<std::array<double, kObsDim>>();
  return c;
}

// ---------------------------------------------------------------------------
// Metrics CSV: fixed header, values rendered with fmt_double.

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(const std::vector<double>& row) {
    if (row.size() != header_.size()) throw ValidationError("csv row width mismatch");
    rows_.push_back(row);
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
    out += "\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt_double(r[i]);
      out += "\n";
    }
    return out;
  }

  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

// ---------------------------------------------------------------------------

inline json to_json(const EpisodeRecord& r) {
  json j = {{"throw",
             {{"position", {r.throw_used.init.position.x(), r.throw_used.init.position.y(), r.throw_used.init.position.z()}},
              {"velocity", {r.throw_used.init.velocity.x(), r.throw_used.init.velocity.y(), r.throw_used.init.velocity.z()}},
              {"landing", {r.throw_used.landing.x(), r.throw_used.landing.y()}}}},
            {"steps", r.num_steps},
            {"return", r.total_return},
            {"breakdown", r.breakdown},
            {"hit", r.events.hit},
            {"landed", r.events.landed},
            {"fault", r.events.fault},
            {"sparse_score", sparse_eval_score(r)}};
  if (r.events.landing) j["landing"] = {r.events.landing->x(), r.events.landing->y()};
  if (r.events.fault) j["fault_reason"] = r.events.fault_reason;
  if (!r.steps.empty()) {
    json steps = json::array();
    for (const auto& s : r.steps) steps.push_back({{"obs", s.obs}, {"action", s.action}, {"reward", s.reward}});
    j["trace"] = steps;
  }
  return j;
}

}  // namespace is2r
