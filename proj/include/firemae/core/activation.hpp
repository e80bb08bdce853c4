#pragma once

#include <cmath>
#include <numbers>
#include <string_view>

#include "firemae/core/autograd.hpp"

namespace firemae {

enum class Activation { gelu, silu, sigmoid };

inline Activation parse_activation(std::string_view s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "silu") return Activation::silu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Exact erf form: gelu(x) = x * Phi(x).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

namespace ops {

template <typename T>
Var<T> activation(const Var<T>& input, Activation kind) {
  const auto& x = input.value();
  Tensor<T> out(input.shape());
  switch (kind) {
    case Activation::gelu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(gelu(x[i]));
      break;
    case Activation::silu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(silu(x[i]));
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(sigmoid(x[i]));
      break;
  }
  return make_result<T>(std::move(out), {&input}, [kind](Node<T>& n) {
    auto& in = *n.inputs[0];
    auto& g = in.grad_buffer();
    const auto& x = in.value;
    switch (kind) {
      case Activation::gelu:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(n.grad[i] * gelu_grad(x[i]));
        break;
      case Activation::silu:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(n.grad[i] * silu_grad(x[i]));
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          g[i] += static_cast<T>(n.grad[i] * y * (1.0 - y));
        }
        break;
    }
  });
}

}  // namespace ops
}  // namespace firemae
