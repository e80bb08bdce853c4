#pragma once

#include <optional>

#include "firemae/core/activation.hpp"
#include "firemae/core/conv.hpp"
#include "firemae/core/norm.hpp"
#include "firemae/core/parameter.hpp"

namespace firemae {

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t cin, std::size_t cout, std::size_t kernel, ConvParams params, bool bias, Rng& rng)
      : params_(params), kernel_(kernel) {
    if (cin % params.groups != 0 || cout % params.groups != 0)
      throw ConfigError("Conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                        " not divisible by groups " + std::to_string(params.groups));
    const std::size_t fan_in = cin / params.groups * kernel * kernel;
    weight_ = Parameter<T>(uniform_fan_in<T>({cout, cin / params.groups, kernel, kernel}, fan_in, rng));
    if (bias) bias_ = Parameter<T>(uniform_fan_in<T>({cout}, fan_in, rng));
  }

  /// Same-padding 3x3 (or k x k) convolution at the given dilation and stride.
  static Conv2d same(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t dilation, std::size_t stride,
                     Rng& rng, std::size_t groups = 1) {
    return Conv2d(cin, cout, kernel, ConvParams{stride, dilation, groups, dilation * (kernel - 1) / 2}, true, rng);
  }

  Var<T> operator()(const Var<T>& x) const {
    return ops::conv2d<T>(x, weight_.var, bias_ ? &bias_->var : nullptr, params_);
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    v.on_param(join_name(prefix, "weight"), weight_);
    if (bias_) v.on_param(join_name(prefix, "bias"), *bias_);
  }

  Parameter<T>& weight() { return weight_; }
  std::optional<Parameter<T>>& bias() { return bias_; }
  std::size_t in_channels() const { return weight_.shape()[1] * params_.groups; }
  std::size_t out_channels() const { return weight_.shape()[0]; }
  const ConvParams& params() const { return params_; }

 private:
  ConvParams params_{};
  std::size_t kernel_ = 1;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(std::size_t channels, std::size_t groups, double eps = 1e-5)
      : groups_(groups), eps_(eps), gamma_(Tensor<T>({channels}, T(1))), beta_(Tensor<T>({channels}, T(0))) {
    if (groups == 0 || channels % groups != 0)
      throw ConfigError("GroupNorm: channels " + std::to_string(channels) + " not divisible by " + std::to_string(groups));
  }

  Var<T> operator()(const Var<T>& x) const { return ops::group_norm<T>(x, groups_, gamma_.var, beta_.var, eps_); }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    v.on_param(join_name(prefix, "weight"), gamma_);
    v.on_param(join_name(prefix, "bias"), beta_);
  }

  std::size_t groups() const { return groups_; }

 private:
  std::size_t groups_ = 1;
  double eps_ = 1e-5;
  Parameter<T> gamma_;
  Parameter<T> beta_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : gamma_(Tensor<T>({channels}, T(1))), beta_(Tensor<T>({channels}, T(0))), state_(channels, momentum, eps) {}

  Var<T> operator()(const Var<T>& x, NormMode mode) { return ops::batch_norm<T>(x, gamma_.var, beta_.var, state_, mode); }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    v.on_param(join_name(prefix, "weight"), gamma_);
    v.on_param(join_name(prefix, "bias"), beta_);
    v.on_buffer(join_name(prefix, "running_mean"), state_.running_mean);
    v.on_buffer(join_name(prefix, "running_var"), state_.running_var);
    v.on_counter(join_name(prefix, "num_batches_tracked"), state_.updates);
  }

  BatchNormState<T>& state() { return state_; }

 private:
  Parameter<T> gamma_;
  Parameter<T> beta_;
  BatchNormState<T> state_;
};

/// k x k Conv -> GroupNorm -> activation.
template <typename T>
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(std::size_t cin, std::size_t cout, std::size_t dilation, std::size_t gn_groups, Rng& rng,
           Activation act = Activation::gelu, std::size_t kernel = 3)
      : conv_(Conv2d<T>::same(cin, cout, kernel, dilation, 1, rng)), norm_(cout, gn_groups), act_(act) {}

  Var<T> operator()(const Var<T>& x) const { return ops::activation<T>(norm_(conv_(x)), act_); }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    conv_.visit(v, join_name(prefix, "conv"));
    norm_.visit(v, join_name(prefix, "norm"));
  }

  Conv2d<T>& conv() { return conv_; }

 private:
  Conv2d<T> conv_;
  GroupNorm<T> norm_;
  Activation act_ = Activation::gelu;
};

}  // namespace firemae
