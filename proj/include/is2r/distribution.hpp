#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "is2r/balldyn.hpp"

namespace is2r {

// Uniform box over initial ball position and velocity plus the robot-side
// landing region: 6 + 6 + 4 = 16 numbers.
struct BallDistribution {
  Vec3 pos_min = Vec3::Zero();
  Vec3 pos_max = Vec3::Zero();
  Vec3 vel_min = Vec3::Zero();
  Vec3 vel_max = Vec3::Zero();
  Vec2 land_min = Vec2::Zero();
  Vec2 land_max = Vec2::Zero();

  static constexpr std::size_t kSize = 16;

  // Field order: pos_min xyz, pos_max xyz, vel_min xyz, vel_max xyz,
  // land_min xy, land_max xy.
  std::array<double, kSize> to_array() const {
    return {pos_min.x(), pos_min.y(), pos_min.z(), pos_max.x(), pos_max.y(), pos_max.z(),
            vel_min.x(), vel_min.y(), vel_min.z(), vel_max.x(), vel_max.y(), vel_max.z(),
            land_min.x(), land_min.y(), land_max.x(), land_max.y()};
  }

  static BallDistribution from_array(const std::array<double, kSize>& a) {
    BallDistribution d;
    d.pos_min = {a[0], a[1], a[2]};
    d.pos_max = {a[3], a[4], a[5]};
    d.vel_min = {a[6], a[7], a[8]};
    d.vel_max = {a[9], a[10], a[11]};
    d.land_min = {a[12], a[13]};
    d.land_max = {a[14], a[15]};
    return d;
  }

  static const std::array<const char*, kSize>& field_names() {
    static const std::array<const char*, kSize> names = {
        "pos_min_x", "pos_min_y", "pos_min_z", "pos_max_x", "pos_max_y", "pos_max_z",
        "vel_min_x", "vel_min_y", "vel_min_z", "vel_max_x", "vel_max_y", "vel_max_z",
        "land_min_x", "land_min_y", "land_max_x", "land_max_y"};
    return names;
  }

  // Width of the quantity that field i bounds (e.g. pos_max.x - pos_min.x).
  double range_of_field(std::size_t i) const {
    const auto a = to_array();
    if (i < 6) return a[3 + i % 3] - a[i % 3];
    if (i < 12) return a[9 + i % 3] - a[6 + i % 3];
    return a[14 + i % 2] - a[12 + i % 2];
  }

  bool operator==(const BallDistribution& other) const { return to_array() == other.to_array(); }

  void validate(const TableGeometry& table) const {
    const auto a = to_array();
    for (double v : a)
      if (!std::isfinite(v)) throw ValidationError("ball distribution has non-finite bounds");
    for (int k = 0; k < 3; ++k) {
      if (pos_min[k] > pos_max[k]) throw ValidationError("ball distribution: pos_min > pos_max");
      if (vel_min[k] > vel_max[k]) throw ValidationError("ball distribution: vel_min > vel_max");
    }
    for (int k = 0; k < 2; ++k)
      if (land_min[k] > land_max[k]) throw ValidationError("ball distribution: land_min > land_max");
    const double tol = 1e-9;
    if (land_min.x() < -table.half_width - tol || land_max.x() > table.half_width + tol ||
        land_min.y() < -table.half_length - tol || land_max.y() > tol)
      throw ValidationError("ball distribution: landing box must lie on the robot half of the table");
  }

  bool contains_init(const BallState& s, double tol = 1e-12) const {
    for (int k = 0; k < 3; ++k) {
      if (s.position[k] < pos_min[k] - tol || s.position[k] > pos_max[k] + tol) return false;
      if (s.velocity[k] < vel_min[k] - tol || s.velocity[k] > vel_max[k] + tol) return false;
    }
    return true;
  }

  bool contains_landing(const Vec2& p, double tol = 1e-12) const {
    return p.x() >= land_min.x() - tol && p.x() <= land_max.x() + tol && p.y() >= land_min.y() - tol &&
           p.y() <= land_max.y() + tol;
  }
};

// One column of the published ball-distribution tables. Velocities in x and y
// are printed as magnitudes: x spans [-max, max] and the ball travels toward
// the robot, so y velocity spans [-max_speed, -min_speed].
struct BallTableColumn {
  double min_z_velocity, max_z_velocity, max_abs_x_velocity, min_abs_y_velocity, max_abs_y_velocity;
  double x_start_min, x_start_max, y_start_min, y_start_max, z_start_min, z_start_max;
  double x_land_min, x_land_max, y_land_min, y_land_max;

  BallDistribution to_distribution() const {
    BallDistribution d;
    d.pos_min = {x_start_min, y_start_min, z_start_min};
    d.pos_max = {x_start_max, y_start_max, z_start_max};
    d.vel_min = {-max_abs_x_velocity, -max_abs_y_velocity, min_z_velocity};
    d.vel_max = {max_abs_x_velocity, -min_abs_y_velocity, max_z_velocity};
    d.land_min = {x_land_min, y_land_min};
    d.land_max = {x_land_max, y_land_max};
    return d;
  }
};

namespace presets {

// Hand-designed ablation boxes.
inline BallDistribution large() {
  return BallTableColumn{-10, 10, 10, 2, 35, -0.76, 0.76, 0.1, 2.0, -0.4, 1.2, -0.76, 0.76, -1.37, -0.1}.to_distribution();
}
inline BallDistribution medium() {
  return BallTableColumn{-0.1, 2, 1.5, 3.5, 8.5, -0.75, 0.4, 1.2, 1.37, 0.15, 0.6, -0.2, 0.7, -1.3, -0.5}.to_distribution();
}
inline BallDistribution narrow() {
  return BallTableColumn{-1.2, 1.5, 0.9, 5.0, 9.4, 0.15, 0.55, 1.01, 1.57, 0.25, 0.64, 0.18, 0.62, -1.26, -0.33}
      .to_distribution();
}
inline BallDistribution s2r_oracle() {
  return BallTableColumn{-1.72, 2.72, 3.45, 2.96, 7.35, -0.82, 0.82, 0.03, 1.58, 0.19, 0.75, -0.62, 0.75, -1.36, -0.15}
      .to_distribution();
}

// Per-player behaviour models M_0, M_1, M_2, indexed [player - 1][model].
inline const std::array<std::array<BallTableColumn, 3>, 5>& player_columns() {
  static const std::array<std::array<BallTableColumn, 3>, 5> table = {{
      {{{1.25, 2.71, 1.70, 4.12, 6.31, -0.19, 0.19, 1.05, 2.51, 0.07, 0.62, -0.01, 0.67, -1.35, -0.2},
        {-1.47, 2.95, 3.05, 2.17, 6.63, -0.79, 0.63, 0.04, 1.87, 0.19, 0.83, -0.62, 0.74, -1.37, -0.15},
        {-1.56, 2.95, 3.05, 2.17, 6.63, -0.83, 0.70, 0.04, 1.92, 0.19, 0.83, -0.71, 0.74, -1.37, -0.15}}},
      {{{0.88, 2.84, 1.41, 3.97, 6.38, 0.02, 0.73, 0.85, 1.68, 0.15, 0.45, -0.08, 0.76, -1.34, -0.23},
        {-1.14, 2.84, 2.81, 3.52, 8.05, -0.86, 0.65, 0.37, 1.89, 0.08, 0.59, -0.52, 0.76, -1.36, -0.15},
        {-1.27, 3.07, 2.89, 2.74, 8.82, -0.87, 0.67, 0.08, 1.95, 0.01, 0.63, -0.68, 0.76, -1.37, -0.15}}},
      {{{0.64, 2.49, 0.79, 2.95, 6.03, 0.10, 0.61, 0.61, 1.35, 0.18, 0.52, -0.08, 0.76, -1.33, -0.22},
        {-1.23, 2.79, 2.59, 2.19, 7.11, -0.93, 0.79, 0.05, 1.83, -0.15, 1.10, -0.67, 0.76, -1.37, -0.18},
        {-1.39, 2.79, 2.78, 2.19, 7.11, -0.93, 0.81, 0.04, 1.92, -0.29, 1.11, -0.74, 0.76, -1.37, -0.16}}},
      {{{0.04, 2.25, 1.50, 4.44, 7.33, -0.09, 0.68, 1.01, 1.88, 0.15, 0.72, -0.02, 0.75, -1.37, -0.27},
        {-1.31, 2.73, 3.40, 3.33, 7.33, -0.8, 0.78, 0.21, 1.58, 0.24, 0.72, -0.19, 0.75, -1.37, -0.21},
        {-1.72, 2.73, 3.45, 2.96, 7.36, -0.83, 0.83, 0.04, 1.58, 0.19, 0.76, -0.63, 0.76, -1.37, -0.15}}},
      {{{0.52, 2.59, 0.68, 4.20, 6.34, 0.25, 0.42, 1.08, 1.44, 0.33, 0.58, 0.07, 0.58, -1.31, -0.30},
        {-0.70, 2.75, 2.30, 2.73, 6.94, -0.64, 0.55, 0.17, 1.81, 0.26, 0.76, -0.66, 0.73, -1.37, -0.16},
        {-0.87, 2.75, 2.68, 2.70, 6.94, -0.80, 0.64, 0.17, 1.82, 0.26, 0.79, -0.666, 0.73, -1.37, -0.16}}},
  }};
  return table;
}

inline BallDistribution player(int player_id, int model) {
  if (player_id < 1 || player_id > 5 || model < 0 || model > 2) throw ValidationError("unknown player model preset");
  return player_columns()[static_cast<std::size_t>(player_id - 1)][static_cast<std::size_t>(model)].to_distribution();
}

// Named lookup: "large", "medium", "narrow", "s2r_oracle", "player3_m0", ...
inline BallDistribution by_name(const std::string& name) {
  if (name == "large") return large();
  if (name == "medium") return medium();
  if (name == "narrow") return narrow();
  if (name == "s2r_oracle") return s2r_oracle();
  if (name.size() == 10 && name.rfind("player", 0) == 0 && name[7] == '_' && name[8] == 'm') {
    const int p = name[6] - '0';
    const int m = name[9] - '0';
    return player(p, m);
  }
  throw ValidationError("unknown distribution preset '" + name + "'");
}

inline std::vector<std::string> names() {
  std::vector<std::string> out = {"large", "medium", "narrow", "s2r_oracle"};
  for (int p = 1; p <= 5; ++p)
    for (int m = 0; m < 3; ++m) out.push_back("player" + std::to_string(p) + "_m" + std::to_string(m));
  return out;
}

}  // namespace presets

}  // namespace is2r
