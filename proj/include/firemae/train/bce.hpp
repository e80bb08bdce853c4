#pragma once

#include <cmath>

#include "firemae/core/resample.hpp"
#include "firemae/mae/losses.hpp"

namespace firemae::train {

/// Mean BCE-with-logits over valid pixels. Invalid pixels are never read, so
/// their logits cannot affect the value or the gradient. An empty valid set
/// gives 0 with `weight_sum == 0`.
template <typename T>
mae::LossValue<T> masked_bce(const Var<T>& logits, const Tensor<T>& labels, const Tensor<T>& valid) {
  require_nchw(logits.shape(), "masked_bce");
  if (labels.shape() != logits.shape() || valid.shape() != logits.shape())
    throw ShapeError("masked_bce", "labels " + shape_str(labels.shape()) + " / valid " + shape_str(valid.shape()) + " must match logits " +
                                       shape_str(logits.shape()));
  double acc = 0;
  std::size_t count = 0;
  const auto& x = logits.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (valid[i] == T(0)) continue;
    const double z = x[i], y = labels[i];
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    ++count;
  }
  const double denom = count ? static_cast<double>(count) : 1.0;
  mae::LossValue<T> out;
  out.weight_sum = static_cast<double>(count);
  out.value = make_result<T>(Tensor<T>({1}, static_cast<T>(acc / denom)), {&logits}, [labels, valid, denom](Node<T>& n) {
    auto& g = n.inputs[0]->grad_buffer();
    const auto& xv = n.inputs[0]->value;
    const double s = n.grad[0] / denom;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (valid[i] == T(0)) continue;
      const double z = xv[i];
      const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g[i] += static_cast<T>(s * (p - static_cast<double>(labels[i])));
    }
  });
  return out;
}

/// Nearest downsampling of 0/1 maps for supervising coarse logits.
template <typename T>
Tensor<T> downsample_mask(const Tensor<T>& m) {
  return resample(m, Rational{1, 2}, ResampleMode::nearest);
}

}  // namespace firemae::train
