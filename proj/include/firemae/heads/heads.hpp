#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "firemae/core/channel_ops.hpp"
#include "firemae/core/layers.hpp"
#include "firemae/core/ops_basic.hpp"
#include "firemae/core/resample.hpp"

namespace firemae::heads {

enum class HeadKind { linear, trt, dwres };

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "linear") return HeadKind::linear;
  if (s == "trt") return HeadKind::trt;
  if (s == "dwres") return HeadKind::dwres;
  throw ConfigError("unknown head kind '" + s + "' (expected linear, trt or dwres)");
}

inline std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::linear: return "linear";
    case HeadKind::trt: return "trt";
    case HeadKind::dwres: return "dwres";
  }
  return "?";
}

struct HeadSpec {
  HeadKind kind = HeadKind::trt;
  std::size_t emb_dim = 64;
  std::size_t hidden = 32;
  std::size_t blocks = 3;
  bool l2_normalize_input = false;
  bool with_hr_refine = false;
  std::size_t refine_width = 16;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    j["kind"] = to_string(kind);
    j["emb_dim"] = emb_dim;
    j["hidden"] = hidden;
    j["blocks"] = blocks;
    j["l2_normalize_input"] = l2_normalize_input;
    j["with_hr_refine"] = with_hr_refine;
    j["refine_width"] = refine_width;
    return j;
  }

  static HeadSpec from_json(const nlohmann::ordered_json& j) {
    HeadSpec s;
    s.kind = parse_head_kind(j.value("kind", std::string("trt")));
    s.emb_dim = j.value("emb_dim", s.emb_dim);
    s.hidden = j.value("hidden", s.hidden);
    s.blocks = j.value("blocks", s.blocks);
    s.l2_normalize_input = j.value("l2_normalize_input", s.l2_normalize_input);
    s.with_hr_refine = j.value("with_hr_refine", s.with_hr_refine);
    s.refine_width = j.value("refine_width", s.refine_width);
    return s;
  }
};

/// GroupNorm with 8 groups when the width allows it, per-channel otherwise.
inline std::size_t norm_groups(std::size_t channels) { return channels % 8 == 0 ? 8 : channels; }

/// Depthwise dilated 3x3 -> pointwise 1x1 -> GroupNorm -> SiLU, added to the input.
template <typename T>
class DwResBlock {
 public:
  DwResBlock() = default;
  DwResBlock(std::size_t width, std::size_t dilation, Rng& rng)
      : dw_(Conv2d<T>::same(width, width, 3, dilation, 1, rng, width)),
        pw_(width, width, 1, ConvParams{}, true, rng),
        norm_(width, norm_groups(width)) {}

  Var<T> operator()(const Var<T>& x) const {
    return ops::add(x, ops::activation<T>(norm_(pw_(dw_(x))), Activation::silu));
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    dw_.visit(v, join_name(prefix, "dw"));
    pw_.visit(v, join_name(prefix, "pw"));
    norm_.visit(v, join_name(prefix, "norm"));
  }

  void zero_convs() {
    for (Conv2d<T>* c : {&dw_, &pw_}) {
      c->weight().mutable_value().fill(T(0));
      if (c->bias()) c->bias()->mutable_value().fill(T(0));
    }
  }

 private:
  Conv2d<T> dw_, pw_;
  GroupNorm<T> norm_;
};

/// 3x3 conv -> BatchNorm -> SiLU.
template <typename T>
class ConvBnSilu {
 public:
  ConvBnSilu() = default;
  ConvBnSilu(std::size_t width, Rng& rng) : conv_(Conv2d<T>::same(width, width, 3, 1, 1, rng)), bn_(width) {}

  Var<T> operator()(const Var<T>& x, NormMode mode) { return ops::activation<T>(bn_(conv_(x), mode), Activation::silu); }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    conv_.visit(v, join_name(prefix, "conv"));
    bn_.visit(v, join_name(prefix, "bn"));
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

/// Coarse-logit head over the D x H/2 x W/2 embedding.
template <typename T>
class SegHead {
 public:
  SegHead() = default;
  SegHead(const HeadSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.emb_dim == 0) throw ConfigError("SegHead: emb_dim must be positive");
    Rng rng(seed);
    if (spec.kind == HeadKind::linear) {
      out_ = Conv2d<T>(spec.emb_dim, 1, 1, ConvParams{}, true, rng);
      return;
    }
    if (spec.hidden == 0) throw ConfigError("SegHead: hidden width must be positive");
    proj_ = Conv2d<T>(spec.emb_dim, spec.hidden, 1, ConvParams{}, true, rng);
    for (std::size_t b = 0; b < spec.blocks; ++b) {
      if (spec.kind == HeadKind::trt) trt_.emplace_back(spec.hidden, rng);
      else dwres_.emplace_back(spec.hidden, std::size_t{1} << (b % 3), rng);
    }
    out_ = Conv2d<T>(spec.hidden, 1, 1, ConvParams{}, true, rng);
  }

  Var<T> operator()(const Var<T>& z, NormMode mode) {
    require_nchw(z.shape(), "SegHead");
    if (z.dim(1) != spec_.emb_dim) throw ShapeError("SegHead", "embedding channels (dim 1)", z.dim(1), spec_.emb_dim);
    Var<T> h = spec_.l2_normalize_input ? ops::l2_normalize_channels(z) : z;
    if (spec_.kind == HeadKind::linear) return out_(h);
    h = proj_(h);
    for (auto& blk : trt_) h = blk(h, mode);
    for (auto& blk : dwres_) h = blk(h);
    return out_(h);
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    if (spec_.kind != HeadKind::linear) proj_.visit(v, join_name(prefix, "proj"));
    for (std::size_t b = 0; b < trt_.size(); ++b) trt_[b].visit(v, join_name(prefix, "block" + std::to_string(b)));
    for (std::size_t b = 0; b < dwres_.size(); ++b) dwres_[b].visit(v, join_name(prefix, "block" + std::to_string(b)));
    out_.visit(v, join_name(prefix, "out"));
  }

  const HeadSpec& spec() const noexcept { return spec_; }
  std::vector<DwResBlock<T>>& dwres_blocks() noexcept { return dwres_; }
  Conv2d<T>& projection() noexcept { return proj_; }
  Conv2d<T>& output() noexcept { return out_; }

 private:
  HeadSpec spec_;
  Conv2d<T> proj_, out_;
  std::vector<ConvBnSilu<T>> trt_;
  std::vector<DwResBlock<T>> dwres_;
};

/// Refinement at input resolution: bilinear-upsampled coarse logits are
/// concatenated after the 32 stem channels and mixed by
/// 3x3 conv -> GroupNorm -> GELU -> 1x1 conv.
template <typename T>
class HrRefine {
 public:
  static constexpr std::size_t stem_channels = 32;

  HrRefine() = default;
  HrRefine(std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    conv_ = Conv2d<T>::same(stem_channels + 1, width, 3, 1, 1, rng);
    norm_ = GroupNorm<T>(width, norm_groups(width));
    out_ = Conv2d<T>(width, 1, 1, ConvParams{}, true, rng);
  }

  Var<T> operator()(const Var<T>& f0, const Var<T>& coarse) const {
    require_nchw(f0.shape(), "hr_refine");
    require_nchw(coarse.shape(), "hr_refine");
    if (f0.dim(1) != stem_channels) throw ShapeError("hr_refine", "stem channels (dim 1)", f0.dim(1), stem_channels);
    const Var<T> up = ops::resample(coarse, Rational{2, 1}, ResampleMode::bilinear);
    if (up.dim(2) != f0.dim(2) || up.dim(3) != f0.dim(3) || up.dim(0) != f0.dim(0))
      throw ShapeError("hr_refine", "upsampled coarse logits " + shape_str(up.shape()) + " do not match stem features " +
                                        shape_str(f0.shape()));
    return out_(ops::activation<T>(norm_(conv_(ops::concat_channels(f0, up))), Activation::gelu));
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    conv_.visit(v, join_name(prefix, "conv"));
    norm_.visit(v, join_name(prefix, "norm"));
    out_.visit(v, join_name(prefix, "out"));
  }

  Conv2d<T>& first_conv() noexcept { return conv_; }

 private:
  Conv2d<T> conv_;
  GroupNorm<T> norm_;
  Conv2d<T> out_;
};

struct Footprint {
  std::size_t params = 0;
  std::size_t fp16_bytes = 0;
  std::size_t fp32_bytes = 0;
};

/// Parameter total over the model manifest and its FP16/FP32 storage size.
/// Buffers (BatchNorm running statistics) are not counted as parameters.
template <typename T, typename Model>
Footprint count_params_and_footprint(Model& model) {
  Footprint f;
  f.params = count_parameters<T>(model);
  f.fp16_bytes = 2 * f.params;
  f.fp32_bytes = 4 * f.params;
  return f;
}

/// Closed-form parameter counts used as regression oracles.
constexpr std::size_t trt_head_parameter_count(std::size_t d, std::size_t hidden = 32, std::size_t blocks = 3) {
  return d * hidden + hidden + blocks * (hidden * hidden * 9 + hidden + 2 * hidden) + hidden + 1;
}

constexpr std::size_t refine_parameter_count(std::size_t width = 16) {
  return 33 * width * 9 + width + 2 * width + width + 1;
}

}  // namespace firemae::heads
