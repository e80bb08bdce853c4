#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "firemae/core/channel_ops.hpp"
#include "firemae/core/ops_basic.hpp"
#include "firemae/core/resample.hpp"

namespace firemae::mae {

inline constexpr double loss_eps = 1e-8;

template <typename T>
struct LossValue {
  Var<T> value;            // 1-element tensor
  double weight_sum = 0;   // number (or mass) of contributing pixels
  bool empty() const { return weight_sum == 0; }
};

/// Masked L1 between the half-resolution reconstruction and the area-
/// downsampled target, averaged over masked and valid pixels. `mask` and
/// `valid` are full-resolution N x 1 x H x W 0/1 tensors, brought to half
/// resolution by nearest sampling.
template <typename T>
LossValue<T> recon_loss(const Var<T>& xhat, const Tensor<T>& x, const Tensor<T>& mask, const Tensor<T>& valid) {
  require_nchw(x.shape(), "recon_loss");
  if (mask.shape() != x.shape() || valid.shape() != x.shape()) throw ShapeError("recon_loss", "mask/valid shape must match the target");
  const Tensor<T> target = resample(x, Rational{1, 2}, ResampleMode::area);
  if (xhat.shape() != target.shape())
    throw ShapeError("recon_loss", "reconstruction " + shape_str(xhat.shape()) + " does not match half-resolution target " +
                                       shape_str(target.shape()));
  Tensor<T> weight = resample(mask, Rational{1, 2}, ResampleMode::nearest);
  const Tensor<T> v_half = resample(valid, Rational{1, 2}, ResampleMode::nearest);
  double wsum = 0, acc = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] = weight[i] * v_half[i];
    if (weight[i] != T(0)) {
      wsum += weight[i];
      acc += std::abs(static_cast<double>(xhat.value()[i]) - static_cast<double>(target[i])) * weight[i];
    }
  }
  const double denom = wsum + loss_eps;
  LossValue<T> out;
  out.weight_sum = wsum;
  out.value = make_result<T>(Tensor<T>({1}, static_cast<T>(acc / denom)), {&xhat},
                             [weight = std::move(weight), target, denom](Node<T>& n) {
                               auto& g = n.inputs[0]->grad_buffer();
                               const auto& xv = n.inputs[0]->value;
                               const double s = n.grad[0] / denom;
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (weight[i] == T(0)) continue;
                                 const double d = static_cast<double>(xv[i]) - static_cast<double>(target[i]);
                                 const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                                 g[i] += static_cast<T>(s * sign * weight[i]);
                               }
                             });
  return out;
}

/// Weighted mean of (1 - cos) between per-pixel channel vectors of the student
/// and the (constant) teacher embedding. `weight` is N x 1 x h x w. Norms are
/// clamped below at eps; above it the cosine is dot / sqrt(|s|^2 |t|^2), which
/// is exactly 1 for identical vectors.
template <typename T>
LossValue<T> distill_loss(const Var<T>& z_s, const Tensor<T>& z_t, const Tensor<T>& weight) {
  require_nchw(z_s.shape(), "distill_loss");
  if (z_t.shape() != z_s.shape()) throw ShapeError("distill_loss", "teacher " + shape_str(z_t.shape()) + " vs student " + shape_str(z_s.shape()));
  const std::size_t n = z_s.dim(0), c = z_s.dim(1), hw = z_s.dim(2) * z_s.dim(3);
  if (weight.shape() != Shape{n, 1, z_s.dim(2), z_s.dim(3)}) throw ShapeError("distill_loss", "weight must be N x 1 x h x w");

  struct PixelCos {
    double q = 0, cos = 0, ns = 0;  // denominator, unclamped cosine, |s|^2
    bool s_clamped = false;
  };
  const auto& sv = z_s.value();
  std::vector<PixelCos> pix(n * hw);
  double wsum = 0, acc = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p) {
      const double wp = weight[b * hw + p];
      if (wp == 0) continue;
      double dot = 0, ns = 0, nt = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = (b * c + ch) * hw + p;
        const double s = sv[i], t = z_t[i];
        dot += s * t;
        ns += s * s;
        nt += t * t;
      }
      const double a = std::sqrt(ns), bt = std::sqrt(nt);
      PixelCos& pc = pix[b * hw + p];
      pc.ns = ns;
      pc.s_clamped = a < loss_eps;
      pc.q = (a >= loss_eps && bt >= loss_eps) ? std::sqrt(ns * nt) : std::max(a, loss_eps) * std::max(bt, loss_eps);
      pc.cos = dot / pc.q;
      acc += (1.0 - std::clamp(pc.cos, -1.0, 1.0)) * wp;
      wsum += wp;
    }
  const double denom = wsum + loss_eps;
  LossValue<T> out;
  out.weight_sum = wsum;
  out.value = make_result<T>(Tensor<T>({1}, static_cast<T>(acc / denom)), {&z_s},
                             [pix = std::move(pix), z_t, weight, n, c, hw, denom](Node<T>& node) {
                               auto& g = node.inputs[0]->grad_buffer();
                               const auto& sv = node.inputs[0]->value;
                               const double s = node.grad[0] / denom;
                               for (std::size_t b = 0; b < n; ++b)
                                 for (std::size_t p = 0; p < hw; ++p) {
                                   const double wp = weight[b * hw + p];
                                   if (wp == 0) continue;
                                   const PixelCos& pc = pix[b * hw + p];
                                   for (std::size_t ch = 0; ch < c; ++ch) {
                                     const std::size_t i = (b * c + ch) * hw + p;
                                     double dcos = static_cast<double>(z_t[i]) / pc.q;
                                     if (!pc.s_clamped) dcos -= pc.cos * static_cast<double>(sv[i]) / pc.ns;
                                     g[i] += static_cast<T>(-s * wp * dcos);
                                   }
                                 }
                             });
  return out;
}

}  // namespace firemae::mae
