#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "firemae/core/optim.hpp"
#include "firemae/data/tiling.hpp"
#include "firemae/eval/probe.hpp"
#include "firemae/heads/heads.hpp"
#include "firemae/mae/ssl.hpp"

namespace firemae::train {

enum class Phase { pretrain, finetune };
enum class Transfer { frozen, full, random_init };

inline Phase parse_phase(const std::string& s) {
  if (s == "pretrain") return Phase::pretrain;
  if (s == "finetune") return Phase::finetune;
  throw ConfigError("unknown phase '" + s + "' (expected pretrain or finetune)");
}
inline std::string to_string(Phase p) { return p == Phase::pretrain ? "pretrain" : "finetune"; }

inline Transfer parse_transfer(const std::string& s) {
  if (s == "frozen") return Transfer::frozen;
  if (s == "full") return Transfer::full;
  if (s == "random_init") return Transfer::random_init;
  throw ConfigError("unknown transfer '" + s + "' (expected frozen, full or random_init)");
}
inline std::string to_string(Transfer t) {
  switch (t) {
    case Transfer::frozen: return "frozen";
    case Transfer::full: return "full";
    case Transfer::random_init: return "random_init";
  }
  return "full";
}

struct Seeds {
  std::uint64_t init = 0;  // parameter initialization
  std::uint64_t data = 0;  // tile order, sampling and augmentation
  std::uint64_t mask = 0;  // SSL mask plans
};

struct RunConfig {
  Phase phase = Phase::pretrain;
  Transfer transfer = Transfer::full;
  AdamWConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
  double warmup_frac = 0.05;
  std::size_t epochs = 50;
  std::size_t batch = 8;
  std::size_t steps_per_epoch = 0;  // 0: one pass over the tiles (pretrain) or tiles / batch (finetune)
  double p_pos = 0.5;
  Seeds seeds;
  std::size_t patience = 10;
  bool augment = true;
  bool keep_all_checkpoints = true;
  mae::SSLConfig ssl;
  heads::HeadSpec head;
  data::TilingConfig tiling;
  eval::ProbeConfig probe;
  bool probe_enabled = true;
  bool select_on_validation = true;  // finetune: rank epochs by validation full-stream AP

  static RunConfig defaults(Phase phase) {
    RunConfig c;
    c.phase = phase;
    if (phase == Phase::finetune) c.optimizer.lr = 3e-4;
    return c;
  }

  std::size_t emb_dim() const { return phase == Phase::pretrain ? ssl.emb_dim : head.emb_dim; }

  void validate() const {
    if (!(optimizer.lr > 0)) throw ConfigError("optimizer.lr must be > 0");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1))
      throw ConfigError("optimizer.betas must lie in [0, 1)");
    if (optimizer.weight_decay < 0) throw ConfigError("optimizer.weight_decay must be >= 0");
    if (!(warmup_frac >= 0 && warmup_frac < 1)) throw ConfigError("schedule.warmup_frac must lie in [0, 1)");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch == 0) throw ConfigError("batch must be >= 1");
    if (!(p_pos >= 0 && p_pos <= 1)) throw ConfigError("p_pos must lie in [0, 1]");
    if (tiling.tile % 2 || tiling.overlap >= tiling.tile) throw ConfigError("tiling: tile must be even and larger than the overlap");
    if (phase == Phase::pretrain) ssl.validate();
  }

  ordered_json to_json() const {
    ordered_json j;
    j["phase"] = to_string(phase);
    j["transfer"] = to_string(transfer);
    j["optimizer"] = {{"lr", optimizer.lr}, {"betas", {optimizer.beta1, optimizer.beta2}}, {"weight_decay", optimizer.weight_decay}};
    j["schedule"] = {{"kind", "cosine"}, {"warmup_frac", warmup_frac}};
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["steps_per_epoch"] = steps_per_epoch;
    j["p_pos"] = p_pos;
    j["seeds"] = {{"init", seeds.init}, {"data", seeds.data}, {"mask", seeds.mask}};
    j["patience"] = patience;
    j["augment"] = augment;
    j["keep_all_checkpoints"] = keep_all_checkpoints;
    j["ssl"] = ssl.to_json();
    j["head"] = head.to_json();
    j["tiling"] = {{"tile", tiling.tile}, {"overlap", tiling.overlap}};
    j["probe"] = {{"enabled", probe_enabled}, {"n_tiles", probe.n_tiles}, {"n_pos", probe.n_pos}, {"k", probe.k},
                  {"seed", probe.seed},       {"epochs", probe.epochs},   {"lr", probe.lr}};
    j["select_on_validation"] = select_on_validation;
    return j;
  }

  /// Missing keys keep the phase defaults; unknown keys are rejected.
  static RunConfig from_json(const ordered_json& j) {
    static const std::set<std::string> known{"phase", "transfer", "optimizer", "schedule", "epochs", "batch", "steps_per_epoch",
                                             "p_pos", "seeds", "patience", "augment", "keep_all_checkpoints", "ssl", "head",
                                             "tiling", "probe", "select_on_validation"};
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw ConfigError("unknown run config key '" + k + "'");
    try {
      RunConfig c = defaults(parse_phase(j.value("phase", std::string("pretrain"))));
      if (j.contains("transfer")) c.transfer = parse_transfer(j.at("transfer").get<std::string>());
      if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        c.optimizer.lr = o.value("lr", c.optimizer.lr);
        if (o.contains("betas")) {
          const auto& b = o.at("betas");
          if (!b.is_array() || b.size() != 2) throw ConfigError("optimizer.betas must be a 2-element array");
          c.optimizer.beta1 = b[0].get<double>();
          c.optimizer.beta2 = b[1].get<double>();
        }
        c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      }
      if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        if (s.value("kind", std::string("cosine")) != "cosine") throw ConfigError("schedule.kind must be cosine");
        c.warmup_frac = s.value("warmup_frac", c.warmup_frac);
      }
      c.epochs = j.value("epochs", c.epochs);
      c.batch = j.value("batch", c.batch);
      c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
      c.p_pos = j.value("p_pos", c.p_pos);
      if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        c.seeds.init = s.value("init", c.seeds.init);
        c.seeds.data = s.value("data", c.seeds.data);
        c.seeds.mask = s.value("mask", c.seeds.mask);
      }
      c.patience = j.value("patience", c.patience);
      c.augment = j.value("augment", c.augment);
      c.keep_all_checkpoints = j.value("keep_all_checkpoints", c.keep_all_checkpoints);
      if (j.contains("ssl")) c.ssl = mae::SSLConfig::from_json(j.at("ssl"));
      if (j.contains("head")) c.head = heads::HeadSpec::from_json(j.at("head"));
      if (j.contains("tiling")) {
        c.tiling.tile = j.at("tiling").value("tile", c.tiling.tile);
        c.tiling.overlap = j.at("tiling").value("overlap", c.tiling.overlap);
      }
      if (j.contains("probe")) {
        const auto& p = j.at("probe");
        c.probe_enabled = p.value("enabled", c.probe_enabled);
        c.probe.n_tiles = p.value("n_tiles", c.probe.n_tiles);
        c.probe.n_pos = p.value("n_pos", c.probe.n_pos);
        c.probe.k = p.value("k", c.probe.k);
        c.probe.seed = p.value("seed", c.probe.seed);
        c.probe.epochs = p.value("epochs", c.probe.epochs);
        c.probe.lr = p.value("lr", c.probe.lr);
      }
      c.select_on_validation = j.value("select_on_validation", c.select_on_validation);
      c.validate();
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed run config: ") + e.what());
    }
  }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read run config " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed run config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace firemae::train
