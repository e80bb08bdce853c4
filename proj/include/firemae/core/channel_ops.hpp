#pragma once

#include <cmath>

#include "firemae/core/autograd.hpp"

namespace firemae::ops {

/// [a, b] along the channel axis.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_nchw(a.value(), "concat_channels");
  require_nchw(b.value(), "concat_channels");
  if (a.dim(0) != b.dim(0)) throw ShapeError("concat_channels", "batch (dim 0)", b.dim(0), a.dim(0));
  if (a.dim(2) != b.dim(2)) throw ShapeError("concat_channels", "height (dim 2)", b.dim(2), a.dim(2));
  if (a.dim(3) != b.dim(3)) throw ShapeError("concat_channels", "width (dim 3)", b.dim(3), a.dim(3));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.value().ptr() + s * ca * plane, ca * plane, out.ptr() + s * (ca + cb) * plane);
    std::copy_n(b.value().ptr() + s * cb * plane, cb * plane, out.ptr() + (s * (ca + cb) + ca) * plane);
  }
  return make_result<T>(std::move(out), {&a, &b}, [n, ca, cb, plane](Node<T>& nd) {
    for (int which = 0; which < 2; ++which) {
      auto& in = *nd.inputs[static_cast<std::size_t>(which)];
      if (!in.requires_grad) continue;
      const std::size_t cw = which == 0 ? ca : cb;
      const std::size_t off = which == 0 ? 0 : ca;
      T* g = in.grad_buffer().ptr();
      for (std::size_t s = 0; s < n; ++s) {
        const T* src = nd.grad.ptr() + (s * (ca + cb) + off) * plane;
        T* dst = g + s * cw * plane;
        for (std::size_t i = 0; i < cw * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

/// Divides every pixel's channel vector by max(||v||_2, eps).
template <typename T>
Var<T> l2_normalize_channels(const Var<T>& input, double eps = 1e-8) {
  require_nchw(input.value(), "l2_normalize_channels");
  if (eps <= 0) throw ConfigError("l2_normalize_channels: eps must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  const auto& x = input.value();
  Tensor<T> out(input.shape());
  std::vector<double> denom(n * plane);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < plane; ++i) {
      double ss = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = x[(s * c + ch) * plane + i];
        ss += v * v;
      }
      const double d = std::max(std::sqrt(ss), eps);
      denom[s * plane + i] = d;
      for (std::size_t ch = 0; ch < c; ++ch) out[(s * c + ch) * plane + i] = static_cast<T>(x[(s * c + ch) * plane + i] / d);
    }
  return make_result<T>(std::move(out), {&input}, [denom = std::move(denom), n, c, plane, eps](Node<T>& nd) {
    T* g = nd.inputs[0]->grad_buffer().ptr();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = denom[s * plane + i];
        if (d <= eps) {  // clamped: y = x / eps is linear
          for (std::size_t ch = 0; ch < c; ++ch) g[(s * c + ch) * plane + i] += static_cast<T>(nd.grad[(s * c + ch) * plane + i] / eps);
          continue;
        }
        double dot = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t idx = (s * c + ch) * plane + i;
          dot += static_cast<double>(nd.grad[idx]) * nd.value[idx];
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t idx = (s * c + ch) * plane + i;
          g[idx] += static_cast<T>((nd.grad[idx] - nd.value[idx] * dot) / d);
        }
      }
  });
}

}  // namespace firemae::ops
