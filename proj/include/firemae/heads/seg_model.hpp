#pragma once

#include <optional>

#include "firemae/core/checkpoint.hpp"
#include "firemae/heads/heads.hpp"
#include "firemae/mae/encoder.hpp"

namespace firemae::heads {

template <typename T>
struct SegOutput {
  Var<T> coarse;                 // N x 1 x H/2 x W/2
  std::optional<Var<T>> refined;  // N x 1 x H x W when refinement is on
  Var<T> surface;                 // prediction surface at input resolution
};

/// Deployment model: encoder + head (+ refinement). The prediction surface is
/// the refined logits when refinement is on, else bilinearly upsampled coarse
/// logits.
template <typename T>
class SegModel {
 public:
  SegModel() = default;
  SegModel(const mae::EncoderSpec& enc, const HeadSpec& head, std::uint64_t seed)
      : encoder_(enc, Rng::derive(seed, 11).next_u64()), head_(checked(enc, head), Rng::derive(seed, 12).next_u64()) {
    if (head.with_hr_refine) refine_.emplace(head.refine_width, Rng::derive(seed, 13).next_u64());
    name_parameters<T>(*this);
  }

  SegModel(const SegModel& o) : encoder_(o.encoder_), head_(o.head_), refine_(o.refine_) { name_parameters<T>(*this); }
  SegModel& operator=(const SegModel& o) {
    encoder_ = o.encoder_;
    head_ = o.head_;
    refine_ = o.refine_;
    name_parameters<T>(*this);
    return *this;
  }

  /// With `freeze_encoder` the encoder runs without recording a graph.
  SegOutput<T> forward(const Var<T>& x, NormMode mode, bool freeze_encoder = false) {
    mae::EncoderOutput<T> e;
    if (freeze_encoder) {
      NoGradGuard ng;
      e = encoder_(x);
    } else {
      e = encoder_(x);
    }
    SegOutput<T> out;
    out.coarse = head_(e.z, mode);
    if (refine_) {
      out.refined = (*refine_)(e.f0, out.coarse);
      out.surface = *out.refined;
    } else {
      out.surface = ops::resample(out.coarse, Rational{2, 1}, ResampleMode::bilinear);
    }
    return out;
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    encoder_.visit(v, join_name(prefix, "encoder"));
    head_.visit(v, join_name(prefix, "head"));
    if (refine_) refine_->visit(v, join_name(prefix, "refine"));
  }

  /// Everything except the encoder.
  std::vector<Parameter<T>*> head_parameters() {
    auto p = collect_parameters<T>(head_, "head");
    if (refine_) {
      auto r = collect_parameters<T>(*refine_, "refine");
      p.insert(p.end(), r.begin(), r.end());
    }
    return p;
  }
  std::vector<Parameter<T>*> all_parameters() { return collect_parameters<T>(*this); }

  mae::Encoder<T>& encoder() noexcept { return encoder_; }
  SegHead<T>& head() noexcept { return head_; }
  std::optional<HrRefine<T>>& refine() noexcept { return refine_; }

  ordered_json config() const {
    ordered_json j = ordered_json::object();
    j["encoder"] = {{"D", encoder_.spec().emb_dim}, {"groupnorm_groups", encoder_.spec().groupnorm_groups}};
    j["head"] = head_.spec().to_json();
    return j;
  }

  void save(Checkpoint& ck) {
    ck.config["model"] = config();
    save_state<T>(*this, ck, "");
  }

  static SegModel from_checkpoint(const Checkpoint& ck) {
    const auto& m = ck.config.at("model");
    mae::EncoderSpec es{m.at("encoder").at("D").get<std::size_t>(), m.at("encoder").value("groupnorm_groups", std::size_t{8})};
    SegModel model(es, HeadSpec::from_json(m.at("head")), 0);
    load_state<T>(model, ck, "");
    return model;
  }

  /// Copies encoder weights saved by pretraining under `prefix`
  /// (normally student.encoder). Shapes must match the encoder spec.
  void load_encoder(const Checkpoint& ck, const std::string& prefix = "student.encoder") { load_state<T>(encoder_, ck, prefix); }

 private:
  static const HeadSpec& checked(const mae::EncoderSpec& enc, const HeadSpec& head) {
    if (enc.emb_dim != head.emb_dim)
      throw ConfigError("head emb_dim " + std::to_string(head.emb_dim) + " does not match encoder D " + std::to_string(enc.emb_dim));
    return head;
  }

  mae::Encoder<T> encoder_;
  SegHead<T> head_;
  std::optional<HrRefine<T>> refine_;
};

}  // namespace firemae::heads
