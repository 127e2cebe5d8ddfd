#pragma once

// Downhill simplex minimiser (Nelder & Mead) with the standard coefficients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "is2r/common.hpp"

namespace is2r {

struct NelderMeadOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  double tol = 1e-10;        // on max f - min f over the simplex
  std::size_t max_iter = 2000;
  // Per-coordinate offsets for the initial simplex. Empty means 5% of |x0_i|
  // (0.00025 for zero entries).
  std::vector<double> initial_step;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

template <typename Objective>
NelderMeadResult nelder_mead(Objective&& objective, const std::vector<double>& x0, const NelderMeadOptions& options = {}) {
  const std::size_t n = x0.size();
  if (n == 0) throw ValidationError("nelder_mead: empty starting point");
  if (!options.initial_step.empty() && options.initial_step.size() != n)
    throw ValidationError("nelder_mead: initial_step size mismatch");

  NelderMeadResult result;
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  const double f0 = eval(x0);
  if (!std::isfinite(f0)) throw ValidationError("nelder_mead: objective not finite at x0");

  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> fv(n + 1, f0);
  for (std::size_t i = 0; i < n; ++i) {
    double step = options.initial_step.empty() ? (x0[i] != 0.0 ? 0.05 * std::abs(x0[i]) : 0.00025) : options.initial_step[i];
    pts[i + 1][i] += step;
    fv[i + 1] = eval(pts[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  auto combine = [&](const std::vector<double>& c, const std::vector<double>& w, double coef, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = c[j] + coef * (w[j] - c[j]);
  };

  for (;;) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second_worst = order[n - 1];

    if (fv[worst] - fv[best] < options.tol || (std::isinf(fv[worst]) && fv[worst] == fv[best])) {
      result.converged = true;
      break;
    }
    if (result.iterations >= options.max_iter) break;
    ++result.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[order[k]][j];
    for (auto& c : centroid) c /= static_cast<double>(n);

    combine(centroid, pts[worst], -options.reflection, xr);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      combine(centroid, xr, options.expansion, xe);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second_worst]) {
      pts[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    // Contraction, outside if the reflected point beat the worst vertex.
    if (fr < fv[worst]) {
      combine(centroid, xr, options.contraction, xc);
      const double fc = eval(xc);
      if (fc <= fr) {
        pts[worst] = xc;
        fv[worst] = fc;
        continue;
      }
    } else {
      combine(centroid, pts[worst], options.contraction, xc);
      const double fc = eval(xc);
      if (fc < fv[worst]) {
        pts[worst] = xc;
        fv[worst] = fc;
        continue;
      }
    }
    for (std::size_t k = 1; k <= n; ++k) {
      auto& p = pts[order[k]];
      for (std::size_t j = 0; j < n; ++j) p[j] = pts[best][j] + options.shrink * (p[j] - pts[best][j]);
      fv[order[k]] = eval(p);
    }
  }

  const auto best_it = std::min_element(fv.begin(), fv.end());
  const auto best_idx = static_cast<std::size_t>(best_it - fv.begin());
  result.x = pts[best_idx];
  result.f = fv[best_idx];
  return result;
}

}  // namespace is2r
