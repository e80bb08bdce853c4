#pragma once

#include <cmath>
#include <numbers>
#include <span>

#include "firemae/core/parameter.hpp"

namespace firemae {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// One AdamW update with decoupled weight decay and bias-corrected moments.
/// `step` is 1-based.
template <typename T>
void adamw_step(std::span<Parameter<T>* const> params, const AdamWConfig& cfg, std::uint64_t step) {
  if (step == 0) throw ConfigError("adamw_step: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Parameter<T>* p : params)
    if (!p->var.has_grad()) throw StateError("adamw_step: parameter '" + p->name + "' has no gradient");
  for (Parameter<T>* p : params) {
    auto& w = p->mutable_value();
    const auto& g = p->var.grad();
    if (p->m.shape() != w.shape()) p->m = Tensor<T>(w.shape());
    if (p->v.shape() != w.shape()) p->v = Tensor<T>(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      double wi = w[i];
      wi -= cfg.lr * cfg.weight_decay * wi;
      const double mi = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * gi * gi;
      p->m[i] = static_cast<T>(mi);
      p->v[i] = static_cast<T>(vi);
      const double mhat = static_cast<double>(p->m[i]) / bc1;
      const double vhat = static_cast<double>(p->v[i]) / bc2;
      wi -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      w[i] = static_cast<T>(wi);
    }
  }
}

/// teacher <- m * teacher + (1 - m) * student, elementwise. The manifests
/// (names and shapes, in order) must agree.
template <typename T>
void ema_update(std::span<Parameter<T>* const> teacher, std::span<Parameter<T>* const> student, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ConfigError("ema_update: momentum must satisfy 0 <= m < 1, got " + std::to_string(m));
  if (teacher.size() != student.size())
    throw ConfigError("ema_update: teacher has " + std::to_string(teacher.size()) + " parameters, student " +
                      std::to_string(student.size()));
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i]->name != student[i]->name || teacher[i]->shape() != student[i]->shape())
      throw ConfigError("ema_update: manifest mismatch at '" + teacher[i]->name + "' vs '" + student[i]->name + "'");
  }
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto& t = teacher[i]->mutable_value();
    const auto& s = student[i]->value();
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<T>(m * t[k] + (1.0 - m) * s[k]);
    teacher[i]->var.zero_grad();
  }
}

/// Linear warmup followed by cosine decay; `step` is 1-based. The decay phase
/// starts at base_lr on its first step and approaches zero without reaching
/// it, so every step of a run updates the weights.
inline double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t total_steps, std::uint64_t warmup_steps) {
  if (total_steps == 0) return base_lr;
  if (warmup_steps > 0 && step <= warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double span = static_cast<double>(std::max<std::uint64_t>(total_steps - std::min(warmup_steps, total_steps), 1));
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps - 1) / span);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace firemae
