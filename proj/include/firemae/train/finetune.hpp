#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "firemae/data/sampler.hpp"
#include "firemae/eval/full_stream.hpp"
#include "firemae/heads/seg_model.hpp"
#include "firemae/train/bce.hpp"
#include "firemae/train/pretrain.hpp"

namespace firemae::train {

struct FinetuneEpoch {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;
  double val_ap = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t encoder_digest = 0;
  std::uint64_t param_digest = 0;
  std::filesystem::path checkpoint;
};

struct FinetuneOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  std::size_t stop_after_epochs = 0;
  std::size_t eval_batch = 8;
  std::function<void(const FinetuneEpoch&)> on_epoch;
};

struct FinetuneResult {
  std::vector<FinetuneEpoch> epochs;
  Selection selection;
  std::filesystem::path best_checkpoint;
  heads::SegModel<float> best_model;
  std::uint64_t log_digest = 0;
  bool early_stopped = false;
  std::uint64_t steps = 0;
};

/// Builds the model for a transfer mode. frozen/full need a pretraining
/// checkpoint, random_init refuses one.
inline heads::SegModel<float> make_transfer_model(const RunConfig& cfg, const std::optional<Checkpoint>& encoder_ck) {
  if (cfg.transfer == Transfer::random_init && encoder_ck) throw ConfigError("transfer random_init must not load a pretrained checkpoint");
  if (cfg.transfer != Transfer::random_init && !encoder_ck)
    throw ConfigError("transfer " + to_string(cfg.transfer) + " needs a pretrained encoder checkpoint");
  heads::SegModel<float> model(mae::EncoderSpec{cfg.head.emb_dim, 8}, cfg.head, cfg.seeds.init);
  if (encoder_ck) {
    if (!encoder_ck->config.contains("pretrain")) throw ConfigError("checkpoint has no pretraining config; not an encoder checkpoint");
    const auto d = encoder_ck->config.at("pretrain").at("D").get<std::size_t>();
    if (d != cfg.head.emb_dim)
      throw ConfigError("encoder checkpoint has D=" + std::to_string(d) + " but the head expects " + std::to_string(cfg.head.emb_dim));
    model.load_encoder(*encoder_ck);
  }
  return model;
}

/// Supervised transfer: masked BCE on the prediction surface. Epochs are
/// ranked by validation full-stream AP when validation scenes are given.
inline FinetuneResult finetune(const RunConfig& cfg_in, const std::optional<Checkpoint>& encoder_ck, const std::vector<data::Tile>& train_tiles,
                               const std::vector<data::SceneContainer>& val_scenes, const FinetuneOptions& opt) {
  RunConfig cfg = cfg_in;
  if (cfg.phase != Phase::finetune) throw ConfigError("finetune: config phase must be finetune");
  cfg.validate();
  if (train_tiles.empty()) throw ConfigError("finetune: no training tiles");
  heads::SegModel<float> model = make_transfer_model(cfg, encoder_ck);
  const bool frozen = cfg.transfer == Transfer::frozen;
  auto params = frozen ? model.head_parameters() : model.all_parameters();

  const std::size_t steps_per_epoch = cfg.steps_per_epoch ? cfg.steps_per_epoch : (train_tiles.size() + cfg.batch - 1) / cfg.batch;
  const std::uint64_t total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t warmup = resolve_warmup(cfg, total_steps);
  const bool select = cfg.select_on_validation && !val_scenes.empty();

  std::filesystem::create_directories(opt.out_dir);
  if (!opt.resume_from) std::filesystem::remove(opt.out_dir / "train_log.jsonl");
  TrainLog log(opt.out_dir / "train_log.jsonl");
  FinetuneResult res;
  std::uint64_t step = 0;
  std::size_t start_epoch = 0;
  if (opt.resume_from) {
    const Checkpoint ck = Checkpoint::load(*opt.resume_from);
    load_state<float>(model, ck, "");
    load_optimizer<float>(params, ck, "optim");
    step = ck.get_counter("train.step");
    start_epoch = ck.get_counter("train.epoch");
    log.set_digest(ck.get_counter("train.log_digest"));
    res.selection = Selection::from_json(ck.config.at("train_state"));
  }
  res.best_model = model;

  const std::size_t end_epoch = opt.stop_after_epochs ? std::min(cfg.epochs, opt.stop_after_epochs) : cfg.epochs;
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    data::BatchSampler sampler(train_tiles, cfg.p_pos, Rng::derive(cfg.seeds.data, epoch).next_u64());
    FinetuneEpoch ep;
    ep.epoch = epoch + 1;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto idx = sampler.next(cfg.batch);
      const std::size_t ts = train_tiles[idx[0]].size;
      Tensor<float> x({cfg.batch, 1, ts, ts}), y({cfg.batch, 1, ts, ts}), v({cfg.batch, 1, ts, ts});
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const data::Tile& src = train_tiles[idx[b]];
        if (src.size != ts) throw ShapeError("finetune", "tiles must share one size");
        const data::Tile t = cfg.augment ? data::augment(src, sampler.rng().next_u64()) : src;
        for (std::size_t k = 0; k < t.pixels(); ++k) {
          x[b * ts * ts + k] = t.patch[k];
          y[b * ts * ts + k] = t.label[k];
          v[b * ts * ts + k] = t.valid[k];
        }
      }
      ++step;
      zero_grads(params);
      const auto out = model.forward(Var<float>(std::move(x)), NormMode::train, frozen);
      auto loss = masked_bce<float>(out.surface, y, v);
      const double lv = loss.value.value()[0];
      if (!std::isfinite(lv)) {
        ordered_json dump{{"epoch", epoch + 1}, {"step", step}, {"data_seed", cfg.seeds.data}, {"tiles", idx}};
        std::ofstream(opt.out_dir / "nan_dump.json") << dump.dump(2) << '\n';
        throw NumericError("finetune: non-finite loss at step " + std::to_string(step) + "; dump written to " +
                           (opt.out_dir / "nan_dump.json").string());
      }
      loss.value.backward();
      AdamWConfig adam = cfg.optimizer;
      adam.lr = cosine_lr(cfg.optimizer.lr, step, total_steps, warmup);
      adamw_step<float>(params, adam, step);
      zero_grads(params);
      log.record("step", {{"epoch", epoch + 1}, {"step", step}, {"lr", adam.lr}, {"loss", lv}, {"rng", hex64(rng_digest(sampler.rng()))}});
      ep.loss += lv;
    }
    ep.loss /= static_cast<double>(steps_per_epoch);
    ep.encoder_digest = parameter_digest<float>(model.encoder());
    ep.param_digest = parameter_digest<float>(model);
    if (select) {
      eval::EvalOptions eo;
      eo.tiling = cfg.tiling;
      // AP is the selection metric; the threshold here is a placeholder
      const auto rep = eval::full_stream_eval(val_scenes, eval::model_predictor(model, opt.eval_batch), "val", eval::FrozenThreshold{0.5, "val"}, eo);
      ep.val_ap = rep.ap.defined ? rep.ap.value : std::numeric_limits<double>::quiet_NaN();
    }
    const bool improved = res.selection.update(ep.epoch, select ? ep.val_ap : static_cast<double>(ep.epoch));
    ordered_json metrics{{"epoch", ep.epoch}, {"loss", ep.loss}, {"encoder_digest", hex64(ep.encoder_digest)},
                         {"param_digest", hex64(ep.param_digest)}};
    metrics["val_ap"] = std::isfinite(ep.val_ap) ? ordered_json(ep.val_ap) : ordered_json(nullptr);
    log.record("epoch", metrics, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    Checkpoint ck;
    model.save(ck);
    save_optimizer<float>(params, ck, "optim");
    ck.config["run"] = cfg.to_json();
    ck.config["train_state"] = res.selection.to_json();
    ck.put_counter("train.step", step);
    ck.put_counter("train.epoch", ep.epoch);
    ck.put_counter("train.log_digest", log.digest());
    ep.checkpoint = opt.out_dir / epoch_dir_name(ep.epoch);
    ck.save(ep.checkpoint);
    if (improved) {
      ck.save(opt.out_dir / "best");
      res.best_checkpoint = opt.out_dir / "best";
      res.best_model = model;
    }
    if (!cfg.keep_all_checkpoints && epoch > start_epoch) std::filesystem::remove_all(opt.out_dir / epoch_dir_name(ep.epoch - 1));
    if (opt.on_epoch) opt.on_epoch(ep);
    res.epochs.push_back(ep);
    if (select && res.selection.bad_epochs >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  if (res.best_checkpoint.empty() && std::filesystem::exists(opt.out_dir / "best")) {
    res.best_checkpoint = opt.out_dir / "best";
    res.best_model = heads::SegModel<float>::from_checkpoint(Checkpoint::load(res.best_checkpoint));
  }
  res.log_digest = log.digest();
  res.steps = step;
  return res;
}

}  // namespace firemae::train
