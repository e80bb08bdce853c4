#pragma once

#include <cmath>
#include <cstdint>

#include "firemae/core/autograd.hpp"

namespace firemae {

namespace detail {

template <typename T>
void require_affine(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, const char* op) {
  require_nchw(input.value(), op);
  const std::size_t c = input.dim(1);
  if (gamma.value().size() != c) throw ShapeError(op, "gamma length", gamma.value().size(), c);
  if (beta.value().size() != c) throw ShapeError(op, "beta length", beta.value().size(), c);
}

/// Shared backward for normalization over index sets: given xhat, inverse std
/// and upstream gradient of y = gamma * xhat + beta for one (sample, group)
/// slice spanning channels [c0, c1) and `plane` elements per channel.
template <typename T>
void norm_backward_slice(const T* gy, const T* xhat, const T* gamma, double inv_std, std::size_t c0, std::size_t c1,
                         std::size_t plane, std::size_t stride_c, T* gx) {
  const double m = static_cast<double>((c1 - c0) * plane);
  double sum_g = 0, sum_gx = 0;
  for (std::size_t c = c0; c < c1; ++c) {
    const T* gyc = gy + c * stride_c;
    const T* xc = xhat + c * stride_c;
    const double gm = gamma[c];
    for (std::size_t i = 0; i < plane; ++i) {
      const double gxh = gyc[i] * gm;
      sum_g += gxh;
      sum_gx += gxh * xc[i];
    }
  }
  for (std::size_t c = c0; c < c1; ++c) {
    const T* gyc = gy + c * stride_c;
    const T* xc = xhat + c * stride_c;
    T* gxc = gx + c * stride_c;
    const double gm = gamma[c];
    for (std::size_t i = 0; i < plane; ++i) {
      const double gxh = gyc[i] * gm;
      gxc[i] += static_cast<T>(inv_std * (gxh - sum_g / m - xc[i] * sum_gx / m));
    }
  }
}

template <typename T>
void affine_param_grads(const Tensor<T>& gy, const Tensor<T>& xhat, Node<T>* gamma, Node<T>* beta) {
  const std::size_t n = gy.dim(0), c = gy.dim(1), plane = gy.dim(2) * gy.dim(3);
  T* gg = gamma->requires_grad ? gamma->grad_buffer().ptr() : nullptr;
  T* gb = beta->requires_grad ? beta->grad_buffer().ptr() : nullptr;
  if (!gg && !gb) return;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* g = gy.ptr() + (s * c + ch) * plane;
      const T* xh = xhat.ptr() + (s * c + ch) * plane;
      double ag = 0, ab = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        ag += static_cast<double>(g[i]) * xh[i];
        ab += g[i];
      }
      if (gg) gg[ch] += static_cast<T>(ag);
      if (gb) gb[ch] += static_cast<T>(ab);
    }
}

}  // namespace detail

namespace ops {

/// Group normalization: per sample, each group of C/num_groups channels is
/// standardized, then scaled by gamma and shifted by beta per channel.
template <typename T>
Var<T> group_norm(const Var<T>& input, std::size_t num_groups, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5) {
  detail::require_affine(input, gamma, beta, "group_norm");
  if (eps <= 0) throw ConfigError("group_norm: eps must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (num_groups == 0 || c % num_groups != 0)
    throw ShapeError("group_norm", "channels " + std::to_string(c) + " not divisible by groups " + std::to_string(num_groups));
  const std::size_t cg = c / num_groups;
  const auto& x = input.value();
  Tensor<T> xhat(input.shape());
  Tensor<T> out(input.shape());
  std::vector<double> inv_std(n * num_groups);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t grp = 0; grp < num_groups; ++grp) {
      const std::size_t base = (s * c + grp * cg) * plane;
      const std::size_t len = cg * plane;
      double mean = 0;
      for (std::size_t i = 0; i < len; ++i) mean += x[base + i];
      mean /= static_cast<double>(len);
      double var = 0;
      for (std::size_t i = 0; i < len; ++i) {
        const double d = x[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(len);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[s * num_groups + grp] = is;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t ch = grp * cg + i / plane;
        const T xh = static_cast<T>((x[base + i] - mean) * is);
        xhat[base + i] = xh;
        out[base + i] = gamma.value()[ch] * xh + beta.value()[ch];
      }
    }
  return make_result<T>(std::move(out), {&input, &gamma, &beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, plane, num_groups, cg](Node<T>& nd) {
                          auto& in = *nd.inputs[0];
                          if (in.requires_grad) {
                            T* gx = in.grad_buffer().ptr();
                            for (std::size_t s = 0; s < n; ++s)
                              for (std::size_t grp = 0; grp < num_groups; ++grp) {
                                const std::size_t off = s * c * plane;
                                detail::norm_backward_slice(nd.grad.ptr() + off, xhat.ptr() + off, nd.inputs[1]->value.ptr(),
                                                            inv_std[s * num_groups + grp], grp * cg, (grp + 1) * cg, plane,
                                                            plane, gx + off);
                              }
                          }
                          detail::affine_param_grads(nd.grad, xhat, nd.inputs[1].get(), nd.inputs[2].get());
                        });
}

}  // namespace ops

enum class NormMode { train, eval };

/// Running statistics of a batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  std::uint64_t updates = 0;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels, double momentum_ = 0.1, double eps_ = 1e-5)
      : running_mean({channels}, T(0)), running_var({channels}, T(1)), momentum(momentum_), eps(eps_) {}
};

namespace ops {

/// Batch normalization. Train mode standardizes with batch statistics and folds
/// them into the running estimates (running = (1-momentum)*running +
/// momentum*batch, variance unbiased); eval mode uses the running estimates.
template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, NormMode mode) {
  detail::require_affine(input, gamma, beta, "batch_norm");
  if (state.eps <= 0) throw ConfigError("batch_norm: eps must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (state.running_mean.size() != c) throw ShapeError("batch_norm", "running stats length", state.running_mean.size(), c);
  const auto& x = input.value();
  Tensor<T> out(input.shape());

  if (mode == NormMode::eval) {
    if (state.updates == 0) throw StateError("batch_norm: eval mode before any running-stat update");
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double is = 1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + state.eps);
      const double mu = state.running_mean[ch];
      const double scale = gamma.value()[ch] * is;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t base = (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) out[base + i] = static_cast<T>((x[base + i] - mu) * scale + beta.value()[ch]);
      }
    }
    return make_result<T>(std::move(out), {&input, &gamma, &beta}, [](Node<T>&) {
      throw StateError("batch_norm: backward through eval mode is not supported");
    });
  }

  const double m = static_cast<double>(n * plane);
  if (m < 2) throw ShapeError("batch_norm", "train mode needs more than one value per channel");
  Tensor<T> xhat(input.shape());
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < plane; ++i) mean += x[(s * c + ch) * plane + i];
    mean /= m;
    double var = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = x[(s * c + ch) * plane + i] - mean;
        var += d * d;
      }
    var /= m;
    const double is = 1.0 / std::sqrt(var + state.eps);
    inv_std[ch] = is;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = (s * c + ch) * plane + i;
        const T xh = static_cast<T>((x[idx] - mean) * is);
        xhat[idx] = xh;
        out[idx] = gamma.value()[ch] * xh + beta.value()[ch];
      }
    state.running_mean[ch] = static_cast<T>((1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean);
    state.running_var[ch] = static_cast<T>((1.0 - state.momentum) * state.running_var[ch] + state.momentum * var * m / (m - 1));
  }
  ++state.updates;
  return make_result<T>(std::move(out), {&input, &gamma, &beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, plane](Node<T>& nd) {
                          auto& in = *nd.inputs[0];
                          if (in.requires_grad) {
                            T* gx = in.grad_buffer().ptr();
                            // Per channel the normalized set spans all samples; gather it.
                            const double m = static_cast<double>(n * plane);
                            const T* gamma = nd.inputs[1]->value.ptr();
                            for (std::size_t ch = 0; ch < c; ++ch) {
                              double sum_g = 0, sum_gx = 0;
                              for (std::size_t s = 0; s < n; ++s)
                                for (std::size_t i = 0; i < plane; ++i) {
                                  const std::size_t idx = (s * c + ch) * plane + i;
                                  const double gxh = static_cast<double>(nd.grad[idx]) * gamma[ch];
                                  sum_g += gxh;
                                  sum_gx += gxh * xhat[idx];
                                }
                              for (std::size_t s = 0; s < n; ++s)
                                for (std::size_t i = 0; i < plane; ++i) {
                                  const std::size_t idx = (s * c + ch) * plane + i;
                                  const double gxh = static_cast<double>(nd.grad[idx]) * gamma[ch];
                                  gx[idx] += static_cast<T>(inv_std[ch] * (gxh - sum_g / m - xhat[idx] * sum_gx / m));
                                }
                            }
                          }
                          detail::affine_param_grads(nd.grad, xhat, nd.inputs[1].get(), nd.inputs[2].get());
                        });
}

}  // namespace ops
}  // namespace firemae
