#pragma once

#include "firemae/core/autograd.hpp"

namespace firemae {

namespace detail {
template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(op, "operand shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace detail

namespace ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result<T>(std::move(out), {&a, &b}, [](Node<T>& n) {
    for (auto& in : n.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {&a, &b}, [](Node<T>& n) {
    auto& x = *n.inputs[0];
    auto& y = *n.inputs[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * x.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  return make_result<T>(std::move(out), {&a}, [factor](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * factor;
  });
}

/// Sum of all elements, returned as a 1-element tensor.
template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  return make_result<T>(Tensor<T>({1}, acc), {&a}, [](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const T s = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

/// Weighted sum: sum(a * w) with a constant weight tensor.
template <typename T>
Var<T> dot_const(const Var<T>& a, const Tensor<T>& w) {
  if (a.shape() != w.shape()) throw ShapeError("dot_const", "weight shape mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += a.value()[i] * w[i];
  return make_result<T>(Tensor<T>({1}, acc), {&a}, [w](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const T s = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * w[i];
  });
}

}  // namespace ops
}  // namespace firemae
