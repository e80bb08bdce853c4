#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "firemae/data/dataset.hpp"
#include "firemae/train/finetune.hpp"

namespace firemae::bench {

/// Seeded pretrain -> transfer -> evaluate protocol on a synthetic dataset.
struct ExperimentConfig {
  std::size_t scenes = 200;
  data::GeneratorConfig generator;
  train::RunConfig pretrain = train::RunConfig::defaults(train::Phase::pretrain);
  train::RunConfig finetune = train::RunConfig::defaults(train::Phase::finetune);
  std::vector<train::Transfer> transfers{train::Transfer::full, train::Transfer::frozen, train::Transfer::random_init};
};

struct TransferOutcome {
  eval::EvalReport val;
  eval::EvalReport test;
  std::size_t best_epoch = 0;
  double seconds = 0;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::size_t pretrain_best_epoch = 0;
  double pretrain_seconds = 0;
  std::map<train::Transfer, TransferOutcome> outcomes;
  double seconds = 0;

  double test_ap(train::Transfer t) const {
    const auto& ap = outcomes.at(t).test.ap;
    return ap.defined ? ap.value : std::numeric_limits<double>::quiet_NaN();
  }
};

/// Every seed of the run (data, init, mask, probe) is derived from `seed`.
inline ExperimentResult run_transfer_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& work_dir) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  ExperimentResult res;
  res.seed = seed;

  const auto scenes = data::generate_scenes(cfg.scenes, Rng::derive(seed, 1).next_u64(), cfg.generator);
  const auto split = data::split_scenes(scenes);
  if (split.train.empty() || split.val.empty() || split.test.empty()) throw ConfigError("experiment: every split needs at least one scene");

  train::RunConfig pre = cfg.pretrain;
  pre.seeds = {Rng::derive(seed, 2).next_u64(), Rng::derive(seed, 3).next_u64(), Rng::derive(seed, 4).next_u64()};
  pre.probe.seed = Rng::derive(seed, 5).next_u64();
  const auto train_tiles = data::tile_scenes(split.train, pre.tiling);
  const auto val_tiles = data::tile_scenes(split.val, pre.tiling);

  std::optional<Checkpoint> encoder_ck;
  const bool need_encoder = std::any_of(cfg.transfers.begin(), cfg.transfers.end(), [](train::Transfer t) { return t != train::Transfer::random_init; });
  if (need_encoder) {
    const auto t0 = clock::now();
    train::PretrainOptions po;
    po.out_dir = work_dir / "pretrain";
    const auto pr = train::pretrain(pre, train_tiles, val_tiles, po);
    if (pr.best_checkpoint.empty()) throw StateError("experiment: pretraining produced no selectable checkpoint");
    res.pretrain_best_epoch = pr.selection.best_epoch.value_or(0);
    encoder_ck = Checkpoint::load(pr.best_checkpoint);
    res.pretrain_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  }

  train::RunConfig ft = cfg.finetune;
  ft.seeds = {Rng::derive(seed, 6).next_u64(), Rng::derive(seed, 7).next_u64(), 0};
  ft.head.emb_dim = pre.ssl.emb_dim;
  const auto ft_tiles = data::tile_scenes(split.train, ft.tiling);
  eval::EvalOptions eo;
  eo.tiling = ft.tiling;

  for (train::Transfer t : cfg.transfers) {
    const auto t0 = clock::now();
    ft.transfer = t;
    train::FinetuneOptions fo;
    fo.out_dir = work_dir / train::to_string(t);
    auto fr = train::finetune(ft, t == train::Transfer::random_init ? std::nullopt : encoder_ck, ft_tiles, split.val, fo);
    TransferOutcome out;
    out.best_epoch = fr.selection.best_epoch.value_or(0);
    const auto predictor = eval::model_predictor(fr.best_model, fo.eval_batch);
    out.val = eval::full_stream_eval(split.val, predictor, "val", std::nullopt, eo);
    out.test = eval::full_stream_eval(split.test, predictor, "test", out.val.frozen_threshold(), eo);
    eval::save_report(out.val, fo.out_dir / "eval_val.json");
    eval::save_report(out.test, fo.out_dir / "eval_test.json");
    out.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    res.outcomes[t] = std::move(out);
  }
  res.seconds = std::chrono::duration<double>(clock::now() - t_start).count();
  return res;
}

}  // namespace firemae::bench
