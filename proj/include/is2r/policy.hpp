#pragma once

// Gated dilated 1-D CNN policy over an 8x11 observation window, evaluated
// from a flat parameter vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "is2r/common.hpp"

namespace is2r {

inline constexpr std::size_t kWindow = 8;
inline constexpr std::size_t kObsDim = 11;
inline constexpr std::size_t kNumJoints = 8;
inline constexpr std::size_t kNumParams = 976;

using ObservationRow = std::array<double, kObsDim>;
using ObservationWindow = std::array<ObservationRow, kWindow>;  // oldest row first
using Action = std::array<double, kNumJoints>;
using JointVector = std::array<double, kNumJoints>;

struct ConvSpec {
  std::size_t in_channels, out_channels, dilation;
  bool gated;
};

inline constexpr std::array<ConvSpec, 3> kLayers = {{{kObsDim, 8, 1, true}, {8, 12, 2, true}, {12, 8, 4, false}}};
inline constexpr std::size_t kKernel = 2;

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Per layer: filter weights [out][in][tap], filter bias [out], then for gated
// layers gate weights [out][in][tap] and gate bias [out].
inline std::vector<ParamSlice> param_layout() {
  std::vector<ParamSlice> out;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < kLayers.size(); ++l) {
    const auto& s = kLayers[l];
    const std::string p = "layer" + std::to_string(l + 1);
    const std::size_t w = s.out_channels * s.in_channels * kKernel;
    out.push_back({p + ".filter.weight", offset, w});
    offset += w;
    out.push_back({p + ".filter.bias", offset, s.out_channels});
    offset += s.out_channels;
    if (s.gated) {
      out.push_back({p + ".gate.weight", offset, w});
      offset += w;
      out.push_back({p + ".gate.bias", offset, s.out_channels});
      offset += s.out_channels;
    }
  }
  return out;
}

inline std::size_t layer_param_count(std::size_t layer) {
  const auto& s = kLayers.at(layer);
  return (s.gated ? 2 : 1) * (s.out_channels * s.in_channels * kKernel + s.out_channels);
}

inline std::size_t param_count() {
  std::size_t n = 0;
  for (std::size_t l = 0; l < kLayers.size(); ++l) n += layer_param_count(l);
  return n;
}

// Named tensors keyed by slice name, and back.
inline std::map<std::string, std::vector<double>> unpack_params(std::span<const double> params) {
  if (params.size() != kNumParams) throw ValidationError("unpack_params: wrong parameter count");
  std::map<std::string, std::vector<double>> out;
  for (const auto& s : param_layout())
    out[s.name] = std::vector<double>(params.begin() + static_cast<long>(s.offset),
                                      params.begin() + static_cast<long>(s.offset + s.size));
  return out;
}

inline std::vector<double> pack_params(const std::map<std::string, std::vector<double>>& tensors) {
  std::vector<double> out(kNumParams, 0.0);
  for (const auto& s : param_layout()) {
    const auto it = tensors.find(s.name);
    if (it == tensors.end() || it->second.size() != s.size)
      throw ValidationError("pack_params: missing or mis-sized tensor '" + s.name + "'");
    std::copy(it->second.begin(), it->second.end(), out.begin() + static_cast<long>(s.offset));
  }
  return out;
}

static_assert(kWindow == 1 + (kKernel - 1) * (1 + 2 + 4), "receptive field must cover the window");

// ---------------------------------------------------------------------------

struct Normalizer {
  std::array<double, kObsDim> mean{};
  std::array<double, kObsDim> m2{};  // sum of squared deviations
  double count = 0.0;

  std::array<double, kObsDim> variance() const {
    std::array<double, kObsDim> v{};
    if (count > 0.0)
      for (std::size_t c = 0; c < kObsDim; ++c) v[c] = std::max(0.0, m2[c] / count);
    return v;
  }

  void update(const ObservationRow& row) {
    count += 1.0;
    for (std::size_t c = 0; c < kObsDim; ++c) {
      const double d = row[c] - mean[c];
      mean[c] += d / count;
      m2[c] += d * (row[c] - mean[c]);
    }
  }

  // Parallel-variance merge; merging in a fixed order gives a fixed result.
  void merge(const Normalizer& other) {
    if (other.count == 0.0) return;
    if (count == 0.0) {
      *this = other;
      return;
    }
    const double n = count + other.count;
    for (std::size_t c = 0; c < kObsDim; ++c) {
      const double d = other.mean[c] - mean[c];
      mean[c] += d * other.count / n;
      m2[c] += other.m2[c] + d * d * count * other.count / n;
    }
    count = n;
  }

  ObservationRow apply(const ObservationRow& row) const {
    ObservationRow out;
    const auto var = variance();
    for (std::size_t c = 0; c < kObsDim; ++c) {
      const double m = count > 0.0 ? mean[c] : 0.0;
      const double sd = (count > 0.0 && var[c] > 1e-8) ? std::sqrt(var[c]) : 1.0;
      out[c] = (row[c] - m) / sd;
    }
    return out;
  }

  static Normalizer standard() {
    Normalizer n;
    n.count = 1.0;
    n.m2.fill(1.0);
    return n;
  }
};

inline Normalizer update_normalizer(Normalizer norm, const ObservationWindow& obs) {
  norm.update(obs.back());
  return norm;
}

// ---------------------------------------------------------------------------

struct ActionLimits {
  double prismatic = 2.0;  // m/s, joints 0 and 1
  double revolute = 6.0;   // rad/s, joints 2..7

  double for_joint(std::size_t j) const { return j < 2 ? prismatic : revolute; }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One dilated kernel-2 conv layer with valid padding. `in` is [time][channel].
inline void conv_layer(const double* params, const ConvSpec& s, const std::vector<double>& in, std::size_t t_in,
                       std::vector<double>& out, std::size_t& t_out) {
  t_out = t_in - s.dilation * (kKernel - 1);
  out.assign(t_out * s.out_channels, 0.0);
  const std::size_t w_size = s.out_channels * s.in_channels * kKernel;
  const double* fw = params;
  const double* fb = fw + w_size;
  const double* gw = fb + s.out_channels;
  const double* gb = gw + w_size;
  for (std::size_t t = 0; t < t_out; ++t) {
    const double* x0 = &in[t * s.in_channels];
    const double* x1 = &in[(t + s.dilation) * s.in_channels];
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      double a = fb[o];
      const double* wo = fw + o * s.in_channels * kKernel;
      for (std::size_t c = 0; c < s.in_channels; ++c) a += wo[c * kKernel] * x0[c] + wo[c * kKernel + 1] * x1[c];
      if (s.gated) {
        double b = gb[o];
        const double* go = gw + o * s.in_channels * kKernel;
        for (std::size_t c = 0; c < s.in_channels; ++c) b += go[c * kKernel] * x0[c] + go[c * kKernel + 1] * x1[c];
        out[t * s.out_channels + o] = std::tanh(a) * sigmoid(b);
      } else {
        out[t * s.out_channels + o] = std::tanh(a);
      }
    }
  }
}

}  // namespace detail

// Network output before velocity scaling, each entry in (-1, 1).
inline Action forward_raw(std::span<const double> params, const ObservationWindow& obs, const Normalizer& norm) {
  if (params.size() != kNumParams)
    throw ValidationError("policy expects " + std::to_string(kNumParams) + " parameters, got " +
                          std::to_string(params.size()));
  std::vector<double> x(kWindow * kObsDim);
  for (std::size_t t = 0; t < kWindow; ++t) {
    const ObservationRow r = norm.apply(obs[t]);
    for (std::size_t c = 0; c < kObsDim; ++c) x[t * kObsDim + c] = r[c];
  }
  std::vector<double> y;
  std::size_t t_len = kWindow;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < kLayers.size(); ++l) {
    std::size_t t_out = 0;
    detail::conv_layer(params.data() + offset, kLayers[l], x, t_len, y, t_out);
    offset += layer_param_count(l);
    t_len = t_out;
    x.swap(y);
  }
  Action a;
  for (std::size_t j = 0; j < kNumJoints; ++j) a[j] = x[j];
  return a;
}

inline Action forward(std::span<const double> params, const ObservationWindow& obs, const Normalizer& norm,
                      const ActionLimits& limits = {}) {
  Action a = forward_raw(params, obs, norm);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const double lim = limits.for_joint(j);
    a[j] = std::clamp(a[j] * lim, -lim, lim);
  }
  return a;
}

// Gaussian weights with std gain/sqrt(fan_in), zero biases.
inline std::vector<double> init_params(std::uint64_t seed, double gain = 1.0) {
  std::vector<double> p(kNumParams, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& slice : param_layout()) {
    if (slice.name.ends_with(".bias")) continue;
    const std::size_t layer = static_cast<std::size_t>(slice.name[5] - '1');
    const double scale = gain / std::sqrt(static_cast<double>(kLayers[layer].in_channels * kKernel));
    for (std::size_t i = 0; i < slice.size; ++i) p[slice.offset + i] = scale * normal(rng);
  }
  return p;
}

}  // namespace is2r
