#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace oodrecon {

/// Adaptive-moment gradient descent with bias correction.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0f), v(n, 0.0f) {}
};

inline void adam_step(std::span<float> x, std::span<const float> g, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double gi = g[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    x[i] -= static_cast<float>(lr * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon));
  }
}

}  // namespace oodrecon
