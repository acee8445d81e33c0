#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "sqcml/lstm.hpp"

namespace sqcml::surrogate {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  LstmParams m;
  LstmParams v;
  std::uint64_t step = 0;

  static AdamState for_params(const LstmParams& p) {
    return {LstmParams::zeros(p.D, p.H), LstmParams::zeros(p.D, p.H), 0};
  }
};

/// Bias-corrected Adam update, elementwise over every tensor.
inline void adam_step(LstmParams& params, LstmParams grads, AdamState& state, const AdamConfig& cfg) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
    throw std::invalid_argument("adam_step: shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  LstmParams::zip(
      [&](auto& p, auto& g, auto& m, auto& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
      },
      params, grads, state.m, state.v);
}

}  // namespace sqcml::surrogate
