#pragma once

#include <algorithm>
#include <cmath>

#include "firemae/core/autograd.hpp"

namespace firemae {

enum class ResampleMode { area, nearest, bilinear };

/// Scale factor num/den applied to both spatial axes.
struct Rational {
  std::size_t num = 1;
  std::size_t den = 1;
};

namespace detail {

struct ResampleGeom {
  std::size_t n, c, h, w, oh, ow, factor;
};

inline ResampleGeom resample_geometry(const Shape& s, Rational scale, ResampleMode mode) {
  if (s.size() != 4) throw ShapeError("resample", "rank", s.size(), 4);
  if (scale.num == 0 || scale.den == 0) throw ConfigError("resample: zero scale component");
  ResampleGeom g{s[0], s[1], s[2], s[3], 0, 0, 0};
  if (mode == ResampleMode::bilinear) {
    if (scale.den != 1) throw ConfigError("resample: bilinear supports integer upsampling only");
    g.factor = scale.num;
    g.oh = g.h * g.factor;
    g.ow = g.w * g.factor;
  } else {
    if (scale.num != 1) throw ConfigError("resample: area/nearest support integer downsampling only");
    g.factor = scale.den;
    if (g.h % g.factor != 0) throw ShapeError("resample", "height " + std::to_string(g.h) + " not divisible by " + std::to_string(g.factor));
    if (g.w % g.factor != 0) throw ShapeError("resample", "width " + std::to_string(g.w) + " not divisible by " + std::to_string(g.factor));
    g.oh = g.h / g.factor;
    g.ow = g.w / g.factor;
  }
  return g;
}

/// Source taps for align_corners=false bilinear upsampling along one axis.
struct Tap {
  std::size_t i0, i1;
  double w1;
};

inline std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out, std::size_t factor) {
  std::vector<Tap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
    std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

template <typename T>
void resample_forward(const ResampleGeom& g, ResampleMode mode, const T* x, T* y) {
  const std::size_t planes = g.n * g.c;
  if (mode == ResampleMode::area) {
    const double inv = 1.0 / static_cast<double>(g.factor * g.factor);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = 0;
          for (std::size_t dy = 0; dy < g.factor; ++dy)
            for (std::size_t dx = 0; dx < g.factor; ++dx)
              acc += x[(p * g.h + oy * g.factor + dy) * g.w + ox * g.factor + dx];
          y[(p * g.oh + oy) * g.ow + ox] = static_cast<T>(acc * inv);
        }
  } else if (mode == ResampleMode::nearest) {
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox)
          y[(p * g.oh + oy) * g.ow + ox] = x[(p * g.h + oy * g.factor) * g.w + ox * g.factor];
  } else {
    const auto th = bilinear_taps(g.h, g.oh, g.factor);
    const auto tw = bilinear_taps(g.w, g.ow, g.factor);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        const auto& a = th[oy];
        const T* r0 = x + (p * g.h + a.i0) * g.w;
        const T* r1 = x + (p * g.h + a.i1) * g.w;
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const auto& b = tw[ox];
          const double top = r0[b.i0] + b.w1 * (r0[b.i1] - r0[b.i0]);
          const double bot = r1[b.i0] + b.w1 * (r1[b.i1] - r1[b.i0]);
          y[(p * g.oh + oy) * g.ow + ox] = static_cast<T>(top + a.w1 * (bot - top));
        }
      }
  }
}

template <typename T>
void resample_backward(const ResampleGeom& g, ResampleMode mode, const T* gy, T* gx) {
  const std::size_t planes = g.n * g.c;
  if (mode == ResampleMode::area) {
    const double inv = 1.0 / static_cast<double>(g.factor * g.factor);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T v = static_cast<T>(gy[(p * g.oh + oy) * g.ow + ox] * inv);
          for (std::size_t dy = 0; dy < g.factor; ++dy)
            for (std::size_t dx = 0; dx < g.factor; ++dx) gx[(p * g.h + oy * g.factor + dy) * g.w + ox * g.factor + dx] += v;
        }
  } else if (mode == ResampleMode::nearest) {
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox)
          gx[(p * g.h + oy * g.factor) * g.w + ox * g.factor] += gy[(p * g.oh + oy) * g.ow + ox];
  } else {
    const auto th = bilinear_taps(g.h, g.oh, g.factor);
    const auto tw = bilinear_taps(g.w, g.ow, g.factor);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        const auto& a = th[oy];
        T* r0 = gx + (p * g.h + a.i0) * g.w;
        T* r1 = gx + (p * g.h + a.i1) * g.w;
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const auto& b = tw[ox];
          const double v = gy[(p * g.oh + oy) * g.ow + ox];
          r0[b.i0] += static_cast<T>(v * (1 - a.w1) * (1 - b.w1));
          r0[b.i1] += static_cast<T>(v * (1 - a.w1) * b.w1);
          r1[b.i0] += static_cast<T>(v * a.w1 * (1 - b.w1));
          r1[b.i1] += static_cast<T>(v * a.w1 * b.w1);
        }
      }
  }
}

}  // namespace detail

/// Constant (non-graph) resampling, used for masks and loss targets.
template <typename T>
Tensor<T> resample(const Tensor<T>& input, Rational scale, ResampleMode mode) {
  const auto g = detail::resample_geometry(input.shape(), scale, mode);
  Tensor<T> out({g.n, g.c, g.oh, g.ow});
  detail::resample_forward(g, mode, input.ptr(), out.ptr());
  return out;
}

namespace ops {

/// Area and nearest downsample by an integer factor (nearest keeps the top-left
/// element of each block); bilinear upsamples by an integer factor with
/// half-pixel centers (align_corners = false).
template <typename T>
Var<T> resample(const Var<T>& input, Rational scale, ResampleMode mode) {
  const auto g = detail::resample_geometry(input.shape(), scale, mode);
  Tensor<T> out({g.n, g.c, g.oh, g.ow});
  detail::resample_forward(g, mode, input.value().ptr(), out.ptr());
  return make_result<T>(std::move(out), {&input}, [g, mode](Node<T>& n) {
    detail::resample_backward(g, mode, n.grad.ptr(), n.inputs[0]->grad_buffer().ptr());
  });
}

}  // namespace ops
}  // namespace firemae
