#pragma once

#include <iostream>

#include "firemae/core/layers.hpp"

namespace firemae::mae {

struct EncoderSpec {
  std::size_t emb_dim = 64;
  std::size_t groupnorm_groups = 8;
};

/// Stem and embedding returned by one encoder pass.
template <typename T>
struct EncoderOutput {
  Var<T> f0;  // N x 32 x H x W
  Var<T> z;   // N x D x H/2 x W/2
};

/// Staged convolutional encoder. Full-resolution 3x3 stem (32 ch), a single
/// stride-2 downsample into 64 ch, then conv units at 96 and 128 channels
/// (the first 128-ch unit dilated by 2) and a 1x1 GELU projection to D.
template <typename T>
class Encoder {
 public:
  static constexpr std::size_t stem_channels = 32;

  Encoder() = default;
  Encoder(const EncoderSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.emb_dim == 0) throw ConfigError("Encoder: emb_dim must be positive");
    if (spec.emb_dim != 32 && spec.emb_dim != 64 && spec.emb_dim != 128)
      std::clog << "warning: encoder emb_dim " << spec.emb_dim << " is outside {32, 64, 128}\n";
    Rng rng(seed);
    const std::size_t g = spec.groupnorm_groups;
    stem_ = ConvUnit<T>(1, 32, 1, g, rng);
    down_ = Conv2d<T>::same(32, 64, 3, 1, 2, rng);
    s1_ = ConvUnit<T>(64, 64, 1, g, rng);
    s2a_ = ConvUnit<T>(64, 96, 1, g, rng);
    s2b_ = ConvUnit<T>(96, 96, 1, g, rng);
    s3a_ = ConvUnit<T>(96, 128, 2, g, rng);
    s3b_ = ConvUnit<T>(128, 128, 1, g, rng);
    emb_ = Conv2d<T>(128, spec.emb_dim, 1, ConvParams{}, true, rng);
  }

  EncoderOutput<T> operator()(const Var<T>& x) const {
    require_nchw(x.shape(), "Encoder");
    if (x.dim(1) != 1) throw ShapeError("Encoder", "channels (dim 1)", x.dim(1), 1);
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
      throw ShapeError("Encoder", "input extent " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) + " must be even");
    EncoderOutput<T> out;
    out.f0 = stem_(x);
    Var<T> h = s1_(down_(out.f0));
    h = s2b_(s2a_(h));
    h = s3b_(s3a_(h));
    out.z = ops::activation<T>(emb_(h), Activation::gelu);
    return out;
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    stem_.visit(v, join_name(prefix, "stem"));
    down_.visit(v, join_name(prefix, "stage1.down"));
    s1_.visit(v, join_name(prefix, "stage1.unit"));
    s2a_.visit(v, join_name(prefix, "stage2.unit0"));
    s2b_.visit(v, join_name(prefix, "stage2.unit1"));
    s3a_.visit(v, join_name(prefix, "stage3.unit0"));
    s3b_.visit(v, join_name(prefix, "stage3.unit1"));
    emb_.visit(v, join_name(prefix, "embed"));
  }

  const EncoderSpec& spec() const noexcept { return spec_; }
  std::size_t emb_dim() const noexcept { return spec_.emb_dim; }

 private:
  EncoderSpec spec_;
  ConvUnit<T> stem_;
  Conv2d<T> down_;
  ConvUnit<T> s1_, s2a_, s2b_, s3a_, s3b_;
  Conv2d<T> emb_;
};

/// Closed-form encoder parameter count.
constexpr std::size_t encoder_parameter_count(std::size_t d) {
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cin * cout * k * k + cout; };
  auto unit = [&](std::size_t cin, std::size_t cout) { return conv(cin, cout, 3) + 2 * cout; };
  return unit(1, 32) + conv(32, 64, 3) + unit(64, 64) + unit(64, 96) + unit(96, 96) + unit(96, 128) + unit(128, 128) +
         conv(128, d, 1);
}

/// Pretraining decoder on the half-resolution grid: 1x1 -> 3x3 -> 1x1, hidden
/// width 64, no normalization.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(std::size_t emb_dim, std::uint64_t seed, Activation act = Activation::gelu, bool zero_init_out = false) : act_(act) {
    Rng rng(seed);
    in_ = Conv2d<T>(emb_dim, 64, 1, ConvParams{}, true, rng);
    mid_ = Conv2d<T>::same(64, 64, 3, 1, 1, rng);
    out_ = Conv2d<T>(64, 1, 1, ConvParams{}, true, rng);
    if (zero_init_out) {
      out_.weight().mutable_value().fill(T(0));
      out_.bias()->mutable_value().fill(T(0));
    }
  }

  Var<T> operator()(const Var<T>& z) const {
    Var<T> h = ops::activation<T>(in_(z), act_);
    h = ops::activation<T>(mid_(h), act_);
    return out_(h);
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    in_.visit(v, join_name(prefix, "in"));
    mid_.visit(v, join_name(prefix, "mid"));
    out_.visit(v, join_name(prefix, "out"));
  }

 private:
  Conv2d<T> in_, mid_, out_;
  Activation act_ = Activation::gelu;
};

template <typename T>
Encoder<T> build_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  return Encoder<T>(spec, seed);
}

}  // namespace firemae::mae
