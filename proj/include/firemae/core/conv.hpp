#pragma once

#include <atomic>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "firemae/core/autograd.hpp"

namespace firemae {

struct ConvParams {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  std::size_t padding = 0;
};

/// Convolution kernel selection. Both paths compute the same correlation; the
/// direct loops are the reference, im2col + GEMM the fast path.
enum class ConvAlgo { direct, im2col };

namespace detail {
inline std::atomic<ConvAlgo> g_conv_algo{ConvAlgo::im2col};
}

inline ConvAlgo conv_algo() noexcept { return detail::g_conv_algo.load(std::memory_order_relaxed); }
inline void set_conv_algo(ConvAlgo algo) noexcept { detail::g_conv_algo.store(algo, std::memory_order_relaxed); }

class ScopedConvAlgo {
 public:
  explicit ScopedConvAlgo(ConvAlgo algo) : previous_(conv_algo()) { set_conv_algo(algo); }
  ~ScopedConvAlgo() { set_conv_algo(previous_); }
  ScopedConvAlgo(const ScopedConvAlgo&) = delete;
  ScopedConvAlgo& operator=(const ScopedConvAlgo&) = delete;

 private:
  ConvAlgo previous_;
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, const ConvParams& p) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(p.dilation * (k - 1) + 1);
  const std::ptrdiff_t padded = static_cast<std::ptrdiff_t>(in + 2 * p.padding);
  if (padded < span) return 0;
  return static_cast<std::size_t>((padded - span) / static_cast<std::ptrdiff_t>(p.stride)) + 1;
}

namespace detail {

struct ConvGeom {
  std::size_t n, cin, h, w, cout, k, oh, ow, cin_g, cout_g;
  ConvParams p;
};

inline ConvGeom conv_geometry(const Shape& in, const Shape& wt, const Shape* bias, const ConvParams& p) {
  if (in.size() != 4) throw ShapeError("conv2d", "input rank", in.size(), 4);
  if (wt.size() != 4) throw ShapeError("conv2d", "weight rank", wt.size(), 4);
  if (p.groups == 0 || p.stride == 0 || p.dilation == 0) throw ConfigError("conv2d: stride, dilation and groups must be positive");
  if (in[1] % p.groups != 0) throw ShapeError("conv2d", "input channels " + std::to_string(in[1]) + " not divisible by groups " + std::to_string(p.groups));
  if (wt[0] % p.groups != 0) throw ShapeError("conv2d", "output channels " + std::to_string(wt[0]) + " not divisible by groups " + std::to_string(p.groups));
  if (wt[1] != in[1] / p.groups) throw ShapeError("conv2d", "weight in-channels (dim 1)", wt[1], in[1] / p.groups);
  if (wt[2] != wt[3]) throw ShapeError("conv2d", "kernel width (dim 3)", wt[3], wt[2]);
  if (bias && (bias->size() != 1 || (*bias)[0] != wt[0])) throw ShapeError("conv2d", "bias length", bias->empty() ? 0 : (*bias)[0], wt[0]);
  ConvGeom g{in[0], in[1], in[2], in[3], wt[0], wt[2], 0, 0, in[1] / p.groups, wt[0] / p.groups, p};
  g.oh = conv_out_extent(g.h, g.k, p);
  g.ow = conv_out_extent(g.w, g.k, p);
  if (g.oh == 0 || g.ow == 0) throw ShapeError("conv2d", "input " + shape_str(in) + " smaller than the dilated kernel");
  return g;
}

/// Output index range [lo, hi) whose input coordinate o*stride + off - pad is in [0, extent).
inline void valid_range(std::size_t out_extent, std::size_t in_extent, std::ptrdiff_t off, std::size_t stride,
                        std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t l = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t h = (static_cast<std::ptrdiff_t>(in_extent) - off + s - 1) / s;
  l = std::max<std::ptrdiff_t>(l, 0);
  h = std::clamp<std::ptrdiff_t>(h, 0, static_cast<std::ptrdiff_t>(out_extent));
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(h, l));
}

template <typename T>
void conv_forward_direct(const ConvGeom& g, const T* in, const T* wt, const T* bias, T* out) {
  const auto& p = g.p;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / g.cout_g;
      T* o = out + (n * g.cout + co) * g.oh * g.ow;
      std::fill(o, o + g.oh * g.ow, bias ? bias[co] : T(0));
      for (std::size_t cig = 0; cig < g.cin_g; ++cig) {
        const std::size_t ci = grp * g.cin_g + cig;
        const T* x = in + (n * g.cin + ci) * g.h * g.w;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const std::ptrdiff_t offh = static_cast<std::ptrdiff_t>(kh * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
          std::size_t oh_lo, oh_hi;
          valid_range(g.oh, g.h, offh, p.stride, oh_lo, oh_hi);
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::ptrdiff_t offw = static_cast<std::ptrdiff_t>(kw * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
            std::size_t ow_lo, ow_hi;
            valid_range(g.ow, g.w, offw, p.stride, ow_lo, ow_hi);
            const T wv = wt[((co * g.cin_g + cig) * g.k + kh) * g.k + kw];
            for (std::size_t oy = oh_lo; oy < oh_hi; ++oy) {
              const T* xr = x + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * p.stride) + offh) * g.w;
              T* orow = o + oy * g.ow;
              if (p.stride == 1) {
                const T* xs = xr + offw;
                for (std::size_t ox = ow_lo; ox < ow_hi; ++ox) orow[ox] += wv * xs[ox];
              } else {
                for (std::size_t ox = ow_lo; ox < ow_hi; ++ox)
                  orow[ox] += wv * xr[static_cast<std::ptrdiff_t>(ox * p.stride) + offw];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_direct(const ConvGeom& g, const T* in, const T* wt, const T* gout, T* gin, T* gwt, T* gbias) {
  const auto& p = g.p;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / g.cout_g;
      const T* go = gout + (n * g.cout + co) * g.oh * g.ow;
      if (gbias) {
        T acc = 0;
        for (std::size_t i = 0; i < g.oh * g.ow; ++i) acc += go[i];
        gbias[co] += acc;
      }
      for (std::size_t cig = 0; cig < g.cin_g; ++cig) {
        const std::size_t ci = grp * g.cin_g + cig;
        const T* x = in + (n * g.cin + ci) * g.h * g.w;
        T* gx = gin ? gin + (n * g.cin + ci) * g.h * g.w : nullptr;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const std::ptrdiff_t offh = static_cast<std::ptrdiff_t>(kh * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
          std::size_t oh_lo, oh_hi;
          valid_range(g.oh, g.h, offh, p.stride, oh_lo, oh_hi);
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::ptrdiff_t offw = static_cast<std::ptrdiff_t>(kw * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
            std::size_t ow_lo, ow_hi;
            valid_range(g.ow, g.w, offw, p.stride, ow_lo, ow_hi);
            const std::size_t widx = ((co * g.cin_g + cig) * g.k + kh) * g.k + kw;
            const T wv = wt[widx];
            T wacc = 0;
            for (std::size_t oy = oh_lo; oy < oh_hi; ++oy) {
              const std::size_t row = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * p.stride) + offh) * g.w;
              const T* gorow = go + oy * g.ow;
              for (std::size_t ox = ow_lo; ox < ow_hi; ++ox) {
                const std::size_t col = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ox * p.stride) + offw);
                wacc += gorow[ox] * x[row + col];
                if (gx) gx[row + col] += wv * gorow[ox];
              }
            }
            if (gwt) gwt[widx] += wacc;
          }
        }
      }
    }
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unfolds one sample/group into a (cin_g*k*k) x (oh*ow) column matrix.
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* cols) {
  const auto& p = g.p;
  const std::size_t hw = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      const std::ptrdiff_t offh = static_cast<std::ptrdiff_t>(kh * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
      std::size_t oh_lo, oh_hi;
      valid_range(g.oh, g.h, offh, p.stride, oh_lo, oh_hi);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const std::ptrdiff_t offw = static_cast<std::ptrdiff_t>(kw * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
        std::size_t ow_lo, ow_hi;
        valid_range(g.ow, g.w, offw, p.stride, ow_lo, ow_hi);
        T* row = cols + ((c * g.k + kh) * g.k + kw) * hw;
        std::fill(row, row + hw, T(0));
        for (std::size_t oy = oh_lo; oy < oh_hi; ++oy) {
          const T* xr = xc + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * p.stride) + offh) * g.w;
          T* r = row + oy * g.ow;
          if (p.stride == 1) {
            std::copy(xr + offw + static_cast<std::ptrdiff_t>(ow_lo), xr + offw + static_cast<std::ptrdiff_t>(ow_hi), r + ow_lo);
          } else {
            for (std::size_t ox = ow_lo; ox < ow_hi; ++ox) r[ox] = xr[static_cast<std::ptrdiff_t>(ox * p.stride) + offw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeom& g, const T* cols, T* gx) {
  const auto& p = g.p;
  const std::size_t hw = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    T* gc = gx + c * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      const std::ptrdiff_t offh = static_cast<std::ptrdiff_t>(kh * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
      std::size_t oh_lo, oh_hi;
      valid_range(g.oh, g.h, offh, p.stride, oh_lo, oh_hi);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const std::ptrdiff_t offw = static_cast<std::ptrdiff_t>(kw * p.dilation) - static_cast<std::ptrdiff_t>(p.padding);
        std::size_t ow_lo, ow_hi;
        valid_range(g.ow, g.w, offw, p.stride, ow_lo, ow_hi);
        const T* row = cols + ((c * g.k + kh) * g.k + kw) * hw;
        for (std::size_t oy = oh_lo; oy < oh_hi; ++oy) {
          T* gr = gc + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(oy * p.stride) + offh) * g.w;
          const T* r = row + oy * g.ow;
          for (std::size_t ox = ow_lo; ox < ow_hi; ++ox) gr[static_cast<std::ptrdiff_t>(ox * p.stride) + offw] += r[ox];
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeom& g) {
  return g.k == 1 && g.p.stride == 1 && g.p.padding == 0;
}

inline bool is_depthwise(const ConvGeom& g) { return g.cin_g == 1 && g.cout_g == 1; }

template <typename T>
void conv_forward_im2col(const ConvGeom& g, const T* in, const T* wt, const T* bias, T* out) {
  if (is_depthwise(g)) return conv_forward_direct(g, in, wt, bias, out);
  const std::size_t kdim = g.cin_g * g.k * g.k;
  const std::size_t hw = g.oh * g.ow;
  std::vector<T> cols(is_pointwise(g) ? 0 : kdim * hw);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.p.groups; ++grp) {
      const T* x = in + (n * g.cin + grp * g.cin_g) * g.h * g.w;
      const T* colp = x;
      if (!is_pointwise(g)) {
        im2col(g, x, cols.data());
        colp = cols.data();
      }
      Eigen::Map<const RowMat<T>> W(wt + grp * g.cout_g * kdim, static_cast<Eigen::Index>(g.cout_g), static_cast<Eigen::Index>(kdim));
      Eigen::Map<const RowMat<T>> C(colp, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
      T* o = out + (n * g.cout + grp * g.cout_g) * hw;
      Eigen::Map<RowMat<T>> O(o, static_cast<Eigen::Index>(g.cout_g), static_cast<Eigen::Index>(hw));
      O.noalias() = W * C;
      if (bias)
        for (std::size_t c = 0; c < g.cout_g; ++c) {
          const T b = bias[grp * g.cout_g + c];
          T* orow = o + c * hw;
          for (std::size_t i = 0; i < hw; ++i) orow[i] += b;
        }
    }
  }
}

template <typename T>
void conv_backward_im2col(const ConvGeom& g, const T* in, const T* wt, const T* gout, T* gin, T* gwt, T* gbias) {
  if (is_depthwise(g)) return conv_backward_direct(g, in, wt, gout, gin, gwt, gbias);
  const std::size_t kdim = g.cin_g * g.k * g.k;
  const std::size_t hw = g.oh * g.ow;
  const bool pw = is_pointwise(g);
  std::vector<T> cols(pw ? 0 : kdim * hw);
  std::vector<T> gcols(pw || !gin ? 0 : kdim * hw);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.p.groups; ++grp) {
      const T* x = in + (n * g.cin + grp * g.cin_g) * g.h * g.w;
      const T* go = gout + (n * g.cout + grp * g.cout_g) * hw;
      Eigen::Map<const RowMat<T>> GO(go, static_cast<Eigen::Index>(g.cout_g), static_cast<Eigen::Index>(hw));
      Eigen::Map<const RowMat<T>> W(wt + grp * g.cout_g * kdim, static_cast<Eigen::Index>(g.cout_g), static_cast<Eigen::Index>(kdim));
      if (gbias)
        for (std::size_t c = 0; c < g.cout_g; ++c) {
          T acc = 0;
          for (std::size_t i = 0; i < hw; ++i) acc += go[c * hw + i];
          gbias[grp * g.cout_g + c] += acc;
        }
      if (gwt) {
        const T* colp = x;
        if (!pw) {
          im2col(g, x, cols.data());
          colp = cols.data();
        }
        Eigen::Map<const RowMat<T>> C(colp, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
        Eigen::Map<RowMat<T>> GW(gwt + grp * g.cout_g * kdim, static_cast<Eigen::Index>(g.cout_g), static_cast<Eigen::Index>(kdim));
        GW.noalias() += GO * C.transpose();
      }
      if (gin) {
        T* gx = gin + (n * g.cin + grp * g.cin_g) * g.h * g.w;
        if (pw) {
          Eigen::Map<RowMat<T>> GX(gx, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
          GX.noalias() += W.transpose() * GO;
        } else {
          Eigen::Map<RowMat<T>> GC(gcols.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
          GC.noalias() = W.transpose() * GO;
          col2im(g, gcols.data(), gx);
        }
      }
    }
  }
}

}  // namespace detail

namespace ops {

/// 2-d cross-correlation over N x Cin x H x W with a Cout x (Cin/groups) x k x k
/// kernel. Differentiable in input, weight and bias.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>* bias, const ConvParams& params) {
  const Shape* bshape = bias ? &bias->shape() : nullptr;
  const auto g = detail::conv_geometry(input.shape(), weight.shape(), bshape, params);
  Tensor<T> out({g.n, g.cout, g.oh, g.ow});
  const ConvAlgo algo = conv_algo();
  const T* bptr = bias ? bias->value().ptr() : nullptr;
  if (algo == ConvAlgo::direct)
    detail::conv_forward_direct(g, input.value().ptr(), weight.value().ptr(), bptr, out.ptr());
  else
    detail::conv_forward_im2col(g, input.value().ptr(), weight.value().ptr(), bptr, out.ptr());
  const bool has_bias = bias != nullptr;
  return make_result<T>(std::move(out), {&input, &weight, bias}, [g, algo, has_bias](Node<T>& n) {
    auto& x = *n.inputs[0];
    auto& w = *n.inputs[1];
    T* gin = x.requires_grad ? x.grad_buffer().ptr() : nullptr;
    T* gwt = w.requires_grad ? w.grad_buffer().ptr() : nullptr;
    T* gb = (has_bias && n.inputs[2]->requires_grad) ? n.inputs[2]->grad_buffer().ptr() : nullptr;
    if (algo == ConvAlgo::direct)
      detail::conv_backward_direct(g, x.value.ptr(), w.value.ptr(), n.grad.ptr(), gin, gwt, gb);
    else
      detail::conv_backward_im2col(g, x.value.ptr(), w.value.ptr(), n.grad.ptr(), gin, gwt, gb);
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const ConvParams& params) {
  return conv2d<T>(input, weight, nullptr, params);
}

}  // namespace ops
}  // namespace firemae
