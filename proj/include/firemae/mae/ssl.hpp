#pragma once

#include <optional>
#include <string>
#include <vector>

#include "firemae/core/checkpoint.hpp"
#include "firemae/core/optim.hpp"
#include "firemae/data/tiling.hpp"
#include "firemae/mae/encoder.hpp"
#include "firemae/mae/losses.hpp"
#include "firemae/mae/masking.hpp"

namespace firemae::mae {

enum class SSLMode { mae, hybrid };
enum class DistillWeight { masked_valid, valid };

inline SSLMode parse_ssl_mode(const std::string& s) {
  if (s == "mae") return SSLMode::mae;
  if (s == "hybrid") return SSLMode::hybrid;
  throw ConfigError("unknown pretraining mode '" + s + "' (expected mae or hybrid)");
}
inline std::string to_string(SSLMode m) { return m == SSLMode::mae ? "mae" : "hybrid"; }

/// Pretraining hyperparameters; serialized as the pretraining config file.
struct SSLConfig {
  std::size_t emb_dim = 64;
  double mask_ratio = 0.6;
  std::size_t block = 2;
  SSLMode mode = SSLMode::mae;
  double lambda = 0.02;
  double momentum = 0.996;
  DistillWeight distill_weight = DistillWeight::masked_valid;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t epochs = 50;
  std::size_t batch = 8;
  std::uint64_t seed = 0;

  ordered_json to_json() const {
    ordered_json j = ordered_json::object();
    j["D"] = emb_dim;
    j["r"] = mask_ratio;
    j["b"] = block;
    j["mode"] = to_string(mode);
    j["lambda"] = lambda;
    j["m"] = momentum;
    j["distill_weight"] = distill_weight == DistillWeight::valid ? "valid" : "masked_valid";
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["seed"] = seed;
    return j;
  }

  static SSLConfig from_json(const ordered_json& j) {
    SSLConfig c;
    c.emb_dim = j.value("D", c.emb_dim);
    c.mask_ratio = j.value("r", c.mask_ratio);
    c.block = j.value("b", c.block);
    c.mode = parse_ssl_mode(j.value("mode", std::string("mae")));
    c.lambda = j.value("lambda", c.lambda);
    c.momentum = j.value("m", c.momentum);
    const auto w = j.value("distill_weight", std::string("masked_valid"));
    if (w != "valid" && w != "masked_valid") throw ConfigError("distill_weight must be masked_valid or valid");
    c.distill_weight = w == "valid" ? DistillWeight::valid : DistillWeight::masked_valid;
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }

  void validate() const {
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("mask ratio must be in (0, 1)");
    if (block == 0) throw ConfigError("mask block must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("EMA momentum must be in [0, 1)");
    if (batch == 0) throw ConfigError("batch must be >= 1");
  }
};

/// Stacked tiles plus their block masks, all N x 1 x H x W.
template <typename T>
struct SSLBatch {
  Tensor<T> x;
  Tensor<T> valid;
  Tensor<T> mask;
};

template <typename T>
SSLBatch<T> make_ssl_batch(const std::vector<const data::Tile*>& tiles, double ratio, std::size_t block, std::uint64_t seed) {
  if (tiles.empty()) throw ConfigError("make_ssl_batch: empty batch");
  const std::size_t s = tiles[0]->size, n = tiles.size(), px = s * s;
  SSLBatch<T> b{Tensor<T>({n, 1, s, s}), Tensor<T>({n, 1, s, s}), Tensor<T>({n, 1, s, s})};
  for (std::size_t i = 0; i < n; ++i) {
    if (tiles[i]->size != s) throw ShapeError("make_ssl_batch", "tiles in a batch must share one size");
    const MaskPlan plan = make_mask_plan(s, s, ratio, block, Rng::derive(seed, i).next_u64());
    for (std::size_t k = 0; k < px; ++k) {
      b.x[i * px + k] = static_cast<T>(tiles[i]->patch[k]);
      b.valid[i * px + k] = static_cast<T>(tiles[i]->valid[k]);
      b.mask[i * px + k] = static_cast<T>(plan.full[k]);
    }
  }
  return b;
}

/// Student encoder + decoder with an optional EMA teacher encoder.
template <typename T>
class DenseMAE {
 public:
  DenseMAE() = default;
  DenseMAE(const SSLConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), encoder_(EncoderSpec{cfg.emb_dim, 8}, Rng::derive(seed, 1).next_u64()),
        decoder_(cfg.emb_dim, Rng::derive(seed, 2).next_u64()) {
    cfg.validate();
    if (cfg.mode == SSLMode::hybrid) teacher_ = encoder_;
    rename();
  }

  DenseMAE(const DenseMAE& o) : cfg_(o.cfg_), encoder_(o.encoder_), decoder_(o.decoder_), teacher_(o.teacher_) { rename(); }
  DenseMAE& operator=(const DenseMAE& o) {
    cfg_ = o.cfg_;
    encoder_ = o.encoder_;
    decoder_ = o.decoder_;
    teacher_ = o.teacher_;
    rename();
    return *this;
  }

  void visit(StateVisitor<T>& v, const std::string& prefix) {
    encoder_.visit(v, join_name(prefix, "student.encoder"));
    decoder_.visit(v, join_name(prefix, "student.decoder"));
    if (teacher_) teacher_->visit(v, join_name(prefix, "teacher.encoder"));
  }

  std::vector<Parameter<T>*> student_parameters() {
    auto p = collect_parameters<T>(encoder_);
    auto d = collect_parameters<T>(decoder_);
    p.insert(p.end(), d.begin(), d.end());
    return p;
  }

  Encoder<T>& encoder() noexcept { return encoder_; }
  Decoder<T>& decoder() noexcept { return decoder_; }
  std::optional<Encoder<T>>& teacher() noexcept { return teacher_; }
  const SSLConfig& config() const noexcept { return cfg_; }
  SSLConfig& mutable_config() noexcept { return cfg_; }

  void save(Checkpoint& ck) {
    ck.config["pretrain"] = cfg_.to_json();
    save_state<T>(*this, ck, "");
    save_optimizer<T>(collect_parameters<T>(encoder_), ck, "optim.encoder");
    save_optimizer<T>(collect_parameters<T>(decoder_), ck, "optim.decoder");
  }
  void load(const Checkpoint& ck, bool with_optimizer = true) {
    load_state<T>(*this, ck, "");
    if (with_optimizer) {
      load_optimizer<T>(collect_parameters<T>(encoder_), ck, "optim.encoder");
      load_optimizer<T>(collect_parameters<T>(decoder_), ck, "optim.decoder");
    }
  }

 private:
  void rename() {
    // names are module-relative so teacher and student manifests line up
    name_parameters<T>(encoder_);
    name_parameters<T>(decoder_, "decoder");
    if (teacher_) name_parameters<T>(*teacher_);
  }

  SSLConfig cfg_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
  std::optional<Encoder<T>> teacher_;
};

template <typename T>
struct SSLForward {
  Var<T> xhat;
  Var<T> z_s;
  Tensor<T> z_t;  // empty in mae mode
  LossValue<T> recon;
  std::optional<LossValue<T>> distill;
  Var<T> total;
};

/// Builds the loss graph for one batch without touching parameters.
template <typename T>
SSLForward<T> ssl_forward(DenseMAE<T>& model, const SSLBatch<T>& batch) {
  const SSLConfig& cfg = model.config();
  Tensor<T> masked_input = batch.x;
  for (std::size_t i = 0; i < masked_input.size(); ++i)
    if (batch.mask[i] != T(0)) masked_input[i] = T(0);

  SSLForward<T> out;
  const auto enc = model.encoder()(Var<T>(std::move(masked_input)));
  out.z_s = enc.z;
  out.xhat = model.decoder()(enc.z);
  out.recon = recon_loss<T>(out.xhat, batch.x, batch.mask, batch.valid);
  out.total = out.recon.value;

  if (cfg.mode == SSLMode::hybrid) {
    if (!model.teacher()) throw StateError("ssl_forward: hybrid mode needs an initialized teacher");
    {
      NoGradGuard ng;
      out.z_t = (*model.teacher())(Var<T>(batch.x)).z.value();
    }
    Tensor<T> w = resample(batch.valid, Rational{1, 2}, ResampleMode::nearest);
    if (cfg.distill_weight == DistillWeight::masked_valid) {
      const Tensor<T> m = resample(batch.mask, Rational{1, 2}, ResampleMode::nearest);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] *= m[i];
    }
    out.distill = distill_loss<T>(out.z_s, out.z_t, w);
    // with lambda == 0 the term stays out of the graph entirely
    if (cfg.lambda != 0.0) out.total = ops::add(out.total, ops::scale(out.distill->value, static_cast<T>(cfg.lambda)));
  }
  return out;
}

struct SSLStepStats {
  double recon = 0, distill = 0, total = 0;
  bool empty_recon = false;
};

/// forward, backward, AdamW on the student, then the EMA teacher update.
/// A non-finite loss throws NumericError before any parameter changes.
template <typename T>
SSLStepStats ssl_step(DenseMAE<T>& model, const SSLBatch<T>& batch, std::uint64_t step, const AdamWConfig& opt) {
  auto params = model.student_parameters();
  zero_grads(params);
  auto fwd = ssl_forward(model, batch);
  SSLStepStats st;
  st.recon = fwd.recon.value.value()[0];
  st.empty_recon = fwd.recon.empty();
  st.distill = fwd.distill ? static_cast<double>(fwd.distill->value.value()[0]) : 0.0;
  st.total = fwd.total.value()[0];
  if (!std::isfinite(st.total)) throw NumericError("ssl_step: non-finite loss at step " + std::to_string(step));
  fwd.total.backward();
  adamw_step<T>(params, opt, step);
  if (model.config().mode == SSLMode::hybrid) {
    auto t = collect_parameters<T>(*model.teacher());
    auto s = collect_parameters<T>(model.encoder());
    ema_update<T>(t, s, model.config().momentum);
  }
  zero_grads(params);
  return st;
}

template <typename T>
SSLStepStats ssl_step(DenseMAE<T>& model, const SSLBatch<T>& batch, std::uint64_t step, double lr) {
  AdamWConfig opt;
  opt.lr = lr;
  opt.weight_decay = model.config().weight_decay;
  return ssl_step(model, batch, step, opt);
}

}  // namespace firemae::mae
