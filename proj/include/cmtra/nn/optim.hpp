#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "cmtra/errors.hpp"
#include "cmtra/nn/matrix.hpp"

namespace cmtra::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments for one parameter tensor.
template <typename T>
struct BasicAdamWState {
  BasicMatrix<T> m, v;
  long step = 0;

  static BasicAdamWState for_param(const BasicMatrix<T>& p) { return {zeros_like(p), zeros_like(p), 0}; }
};

using AdamWState = BasicAdamWState<double>;

/// One decoupled-weight-decay Adam update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
template <typename T>
void adamw_step(BasicMatrix<T>& param, const BasicMatrix<T>& grad, BasicAdamWState<T>& state, double lr,
                const AdamWConfig& cfg = {}) {
  if (!param.same_shape(grad)) throw ShapeError("adamw: gradient shape " + shape_string(grad) +
                                                " != parameter shape " + shape_string(param));
  if (!param.same_shape(state.m) || !param.same_shape(state.v)) throw ShapeError("adamw: state shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto p = param.flat();
  auto g = grad.flat();
  auto m = state.m.flat();
  auto v = state.v.flat();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i]);
    v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i]);
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] = static_cast<T>(p[i] - lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p[i]));
  }
}

/// Slanted triangular envelope plus discriminative per-layer decay.
struct ScheduleConfig {
  double base_lr = 2e-5;
  double cut_fraction = 0.1;
  double ratio = 32.0;
  double layer_decay = 2.6;
  long total_steps = 1;

  void validate() const {
    if (!(cut_fraction > 0.0 && cut_fraction < 1.0)) throw ConfigError("cut_fraction must lie in (0, 1)");
    if (!(layer_decay > 1.0)) throw ConfigError("layer decay factor must exceed 1");
    if (!(ratio >= 1.0)) throw ConfigError("STLR ratio must be >= 1");
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be >= 0");
  }

  long cut_step() const {
    const auto c = static_cast<long>(std::floor(static_cast<double>(total_steps) * cut_fraction));
    return c < 1 ? 1 : (c >= total_steps && total_steps > 1 ? total_steps - 1 : c);
  }
};

/// Envelope: rises linearly from base/ratio at step 0 to base at the cut
/// step, then falls linearly back to base/ratio at total_steps.
inline double stlr_envelope(long step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step < 0 || step > cfg.total_steps) {
    throw ConfigError("schedule step " + std::to_string(step) + " outside [0, " +
                      std::to_string(cfg.total_steps) + "]");
  }
  const long cut = cfg.cut_step();
  double p;
  if (step <= cut) {
    p = static_cast<double>(step) / static_cast<double>(cut);
  } else {
    const long tail = cfg.total_steps - cut;
    p = tail > 0 ? 1.0 - static_cast<double>(step - cut) / static_cast<double>(tail) : 1.0;
  }
  return cfg.base_lr * (1.0 + p * (cfg.ratio - 1.0)) / cfg.ratio;
}

/// Rate for layer group `layer_index` (top = num_layers - 1): the envelope
/// divided by decay^(num_layers - 1 - layer_index).
inline double schedule_lr(long step, std::size_t layer_index, std::size_t num_layers, const ScheduleConfig& cfg) {
  if (num_layers == 0 || layer_index >= num_layers) {
    throw ConfigError("layer index " + std::to_string(layer_index) + " outside [0, " + std::to_string(num_layers) +
                      ")");
  }
  const double depth = static_cast<double>(num_layers - 1 - layer_index);
  return stlr_envelope(step, cfg) / std::pow(cfg.layer_decay, depth);
}

}  // namespace cmtra::nn
