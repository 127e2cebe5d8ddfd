#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "is2r/common.hpp"

namespace is2r {

inline constexpr int kNoise = -1;

// Density clustering over points in R^d (points stored as equal-length
// vectors). A point is core when at least `min_pts` points, itself included,
// lie within `eps`. Cluster ids are assigned 0,1,... in order of discovery
// while scanning points by index, so labels are a function of input order.
template <typename Point>
std::vector<int> dbscan(std::span<const Point> points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0)) throw ValidationError("dbscan: eps must be positive");
  if (min_pts < 1) throw ValidationError("dbscan: min_pts must be >= 1");
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  const double eps2 = eps * eps;
  auto dist2 = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < points[a].size(); ++j) {
      const double d = points[a][j] - points[b][j];
      s += d * d;
    }
    return s;
  };

  std::vector<std::size_t> scratch;
  auto region = [&](std::size_t i) -> const std::vector<std::size_t>& {
    scratch.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (dist2(i, j) <= eps2) scratch.push_back(j);
    return scratch;
  };

  std::vector<bool> visited(n, false);
  std::vector<bool> queued(n, false);
  int next_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i]) continue;
    visited[i] = true;
    const auto& seeds = region(i);
    if (seeds.size() < min_pts) continue;
    const int id = next_id++;
    labels[i] = id;
    std::deque<std::size_t> frontier;
    for (std::size_t r : seeds)
      if (!queued[r]) {
        queued[r] = true;
        frontier.push_back(r);
      }
    while (!frontier.empty()) {
      const std::size_t q = frontier.front();
      frontier.pop_front();
      if (labels[q] == kNoise) labels[q] = id;
      if (visited[q]) continue;
      visited[q] = true;
      const auto& around = region(q);
      if (around.size() >= min_pts)
        for (std::size_t r : around)
          if (!queued[r]) {
            queued[r] = true;
            frontier.push_back(r);
          }
    }
  }
  return labels;
}

template <typename Point>
std::vector<int> dbscan(const std::vector<Point>& points, double eps, std::size_t min_pts) {
  return dbscan(std::span<const Point>(points), eps, min_pts);
}

}  // namespace is2r
