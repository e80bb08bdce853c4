#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "firemae/core/checkpoint.hpp"
#include "firemae/eval/probe.hpp"
#include "firemae/mae/ssl.hpp"
#include "firemae/train/run_config.hpp"
#include "firemae/train/train_log.hpp"

namespace firemae::train {

inline std::string epoch_dir_name(std::size_t epoch) {
  std::string s = std::to_string(epoch);
  return "epoch_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline std::size_t resolve_warmup(const RunConfig& cfg, std::uint64_t total_steps) {
  return static_cast<std::size_t>(std::llround(cfg.warmup_frac * static_cast<double>(total_steps)));
}

/// Selection-metric bookkeeping shared by both phases.
struct Selection {
  std::optional<std::size_t> best_epoch;  // 1-based
  double best = -std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::vector<double> history;

  /// Returns true when `metric` is a new best. NaN never improves.
  bool update(std::size_t epoch, double metric) {
    history.push_back(metric);
    if (std::isfinite(metric) && metric > best) {
      best = metric;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }

  ordered_json to_json() const {
    ordered_json j;
    j["best_epoch"] = best_epoch ? ordered_json(*best_epoch) : ordered_json(nullptr);
    j["best"] = best_epoch ? ordered_json(best) : ordered_json(nullptr);
    j["bad_epochs"] = bad_epochs;
    ordered_json h = ordered_json::array();
    for (double v : history) h.push_back(std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr));
    j["history"] = h;
    return j;
  }

  static Selection from_json(const ordered_json& j) {
    Selection s;
    if (!j.at("best_epoch").is_null()) {
      s.best_epoch = j.at("best_epoch").get<std::size_t>();
      s.best = j.at("best").get<double>();
    }
    s.bad_epochs = j.at("bad_epochs").get<std::size_t>();
    for (const auto& v : j.at("history")) s.history.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    return s;
  }
};

struct PretrainEpoch {
  std::size_t epoch = 0;  // 1-based
  double recon = 0, distill = 0, total = 0;
  double probe_ap = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t param_digest = 0;
  std::filesystem::path checkpoint;
};

struct PretrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;  // an epoch checkpoint directory
  std::size_t stop_after_epochs = 0;                 // 0: run to cfg.epochs (used to split a run for resume)
  std::function<void(const PretrainEpoch&)> on_epoch;
};

struct PretrainResult {
  std::vector<PretrainEpoch> epochs;  // epochs run in this call
  Selection selection;
  std::filesystem::path best_checkpoint;
  std::uint64_t log_digest = 0;
  bool early_stopped = false;
  std::uint64_t steps = 0;
};

/// SSL pretraining over `train_tiles`. Each epoch is checkpointed and ranked
/// by validation probe AP (when enabled); early stopping after `patience`
/// epochs without improvement.
inline PretrainResult pretrain(const RunConfig& cfg_in, const std::vector<data::Tile>& train_tiles, const std::vector<data::Tile>& val_tiles,
                               const PretrainOptions& opt) {
  RunConfig cfg = cfg_in;
  if (cfg.phase != Phase::pretrain) throw ConfigError("pretrain: config phase must be pretrain");
  cfg.validate();
  if (train_tiles.empty()) throw ConfigError("pretrain: no training tiles");
  // the run config is authoritative for the shared optimization fields
  cfg.ssl.lr = cfg.optimizer.lr;
  cfg.ssl.weight_decay = cfg.optimizer.weight_decay;
  cfg.ssl.epochs = cfg.epochs;
  cfg.ssl.batch = cfg.batch;
  cfg.ssl.seed = cfg.seeds.init;

  const std::size_t n = train_tiles.size();
  const std::size_t steps_per_epoch = cfg.steps_per_epoch ? cfg.steps_per_epoch : (n + cfg.batch - 1) / cfg.batch;
  const std::uint64_t total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t warmup = resolve_warmup(cfg, total_steps);

  mae::DenseMAE<float> model(cfg.ssl, cfg.seeds.init);
  std::optional<eval::ProbeEvaluator> probe;
  if (cfg.probe_enabled) probe.emplace(train_tiles, val_tiles, cfg.probe);

  std::filesystem::create_directories(opt.out_dir);
  if (!opt.resume_from) std::filesystem::remove(opt.out_dir / "train_log.jsonl");
  TrainLog log(opt.out_dir / "train_log.jsonl");
  PretrainResult res;
  std::uint64_t step = 0;
  std::size_t start_epoch = 0;
  if (opt.resume_from) {
    const Checkpoint ck = Checkpoint::load(*opt.resume_from);
    if (ck.config.at("pretrain").at("D").get<std::size_t>() != cfg.ssl.emb_dim) throw ConfigError("resume: checkpoint D differs from the config");
    model.load(ck, true);
    step = ck.get_counter("train.step");
    start_epoch = ck.get_counter("train.epoch");
    log.set_digest(ck.get_counter("train.log_digest"));
    res.selection = Selection::from_json(ck.config.at("train_state"));
  }

  const std::size_t end_epoch = opt.stop_after_epochs ? std::min(cfg.epochs, opt.stop_after_epochs) : cfg.epochs;
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng order_rng = Rng::derive(cfg.seeds.data, epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    PretrainEpoch ep;
    ep.epoch = epoch + 1;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<data::Tile> tiles;
      std::vector<std::size_t> idx;
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t slot = (s * cfg.batch + b) % n;
        idx.push_back(order[slot]);
        const data::Tile& src = train_tiles[order[slot]];
        tiles.push_back(cfg.augment ? data::augment(src, Rng::derive(cfg.seeds.data ^ 0x5eed, epoch * 1'000'003 + slot).next_u64()) : src);
      }
      std::vector<const data::Tile*> ptrs;
      for (const auto& t : tiles) ptrs.push_back(&t);
      ++step;
      const std::uint64_t mask_seed = Rng::derive(cfg.seeds.mask, step).next_u64();
      const auto batch = mae::make_ssl_batch<float>(ptrs, cfg.ssl.mask_ratio, cfg.ssl.block, mask_seed);
      AdamWConfig adam = cfg.optimizer;
      adam.lr = cosine_lr(cfg.optimizer.lr, step, total_steps, warmup);
      mae::SSLStepStats st;
      try {
        st = mae::ssl_step(model, batch, step, adam);
      } catch (const NumericError& e) {
        ordered_json dump;
        dump["epoch"] = epoch + 1;
        dump["step"] = step;
        dump["mask_seed"] = mask_seed;
        dump["data_seed"] = cfg.seeds.data;
        ordered_json list = ordered_json::array();
        for (std::size_t i : idx)
          list.push_back({{"index", i}, {"scene_id", train_tiles[i].scene_id}, {"row", train_tiles[i].row}, {"col", train_tiles[i].col}});
        dump["tiles"] = list;
        const auto path = opt.out_dir / "nan_dump.json";
        std::ofstream(path) << dump.dump(2) << '\n';
        throw NumericError(std::string(e.what()) + "; batch mask seed " + std::to_string(mask_seed) + ", dump written to " + path.string());
      }
      log.record("step", {{"epoch", epoch + 1}, {"step", step}, {"lr", adam.lr}, {"recon", st.recon}, {"distill", st.distill},
                          {"total", st.total}, {"mask_seed", mask_seed}, {"rng", hex64(rng_digest(order_rng))}});
      ep.recon += st.recon;
      ep.distill += st.distill;
      ep.total += st.total;
    }
    ep.recon /= static_cast<double>(steps_per_epoch);
    ep.distill /= static_cast<double>(steps_per_epoch);
    ep.total /= static_cast<double>(steps_per_epoch);
    ep.param_digest = parameter_digest<float>(model);
    if (probe) ep.probe_ap = probe->evaluate(model.encoder()).value;
    const bool improved = res.selection.update(ep.epoch, probe ? ep.probe_ap : -ep.recon);

    ordered_json metrics{{"epoch", ep.epoch}, {"recon", ep.recon}, {"distill", ep.distill}, {"total", ep.total},
                         {"param_digest", hex64(ep.param_digest)}};
    metrics["probe_ap"] = std::isfinite(ep.probe_ap) ? ordered_json(ep.probe_ap) : ordered_json(nullptr);
    log.record("epoch", metrics, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    Checkpoint ck;
    model.save(ck);
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
    }
    if (!cfg.keep_all_checkpoints && epoch > start_epoch) std::filesystem::remove_all(opt.out_dir / epoch_dir_name(ep.epoch - 1));
    if (opt.on_epoch) opt.on_epoch(ep);
    res.epochs.push_back(ep);
    if (res.selection.bad_epochs >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  if (res.best_checkpoint.empty() && std::filesystem::exists(opt.out_dir / "best")) res.best_checkpoint = opt.out_dir / "best";
  res.log_digest = log.digest();
  res.steps = step;
  return res;
}

}  // namespace firemae::train
