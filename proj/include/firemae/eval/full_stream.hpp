#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "firemae/core/activation.hpp"
#include "firemae/data/scaler.hpp"
#include "firemae/data/tiling.hpp"
#include "firemae/eval/ap.hpp"
#include "firemae/eval/fire_f1.hpp"
#include "firemae/heads/seg_model.hpp"

namespace firemae::eval {

/// Maps a batch of tiles to per-tile probability maps (size x size, row-major).
using TilePredictor = std::function<std::vector<std::vector<float>>(const std::vector<const data::Tile*>&)>;

/// Probabilities from a segmentation model's prediction surface.
template <typename T>
TilePredictor model_predictor(heads::SegModel<T>& model, std::size_t batch = 8) {
  return [&model, batch](const std::vector<const data::Tile*>& tiles) {
    std::vector<std::vector<float>> out;
    out.reserve(tiles.size());
    NoGradGuard ng;
    for (std::size_t start = 0; start < tiles.size(); start += batch) {
      const std::size_t end = std::min(tiles.size(), start + batch);
      const std::size_t s = tiles[start]->size;
      Tensor<T> x({end - start, 1, s, s});
      for (std::size_t b = start; b < end; ++b) std::copy(tiles[b]->patch.begin(), tiles[b]->patch.end(), x.ptr() + (b - start) * s * s);
      const Tensor<T> logits = model.forward(Var<T>(std::move(x)), NormMode::eval).surface.value();
      for (std::size_t b = 0; b < end - start; ++b) {
        std::vector<float> p(s * s);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(sigmoid(static_cast<double>(logits[b * s * s + i])));
        out.push_back(std::move(p));
      }
    }
    return out;
  };
}

/// Predicts the ground-truth labels; reference for the metric pipeline.
inline TilePredictor oracle_predictor() {
  return [](const std::vector<const data::Tile*>& tiles) {
    std::vector<std::vector<float>> out;
    for (const auto* t : tiles) out.emplace_back(t->label.begin(), t->label.end());
    return out;
  };
}

inline TilePredictor constant_predictor(float value) {
  return [value](const std::vector<const data::Tile*>& tiles) {
    std::vector<std::vector<float>> out;
    for (const auto* t : tiles) out.emplace_back(t->pixels(), value);
    return out;
  };
}

/// For each coordinate along one axis, the index of the window whose centre
/// is nearest; ties go to the lower index.
inline std::vector<std::size_t> nearest_window(std::size_t extent, const std::vector<std::size_t>& origins, std::size_t tile) {
  std::vector<std::size_t> owner(extent, 0);
  for (std::size_t x = 0; x < extent; ++x) {
    // distances doubled to stay in integers: centre = origin + (tile - 1) / 2
    std::size_t best = 0;
    long long best_d = -1;
    for (std::size_t k = 0; k < origins.size(); ++k) {
      if (x < origins[k] || x >= origins[k] + tile) continue;
      const long long d = std::llabs(2 * static_cast<long long>(x) - (2 * static_cast<long long>(origins[k]) + static_cast<long long>(tile) - 1));
      if (best_d < 0 || d < best_d) {
        best_d = d;
        best = k;
      }
    }
    owner[x] = best;
  }
  return owner;
}

/// Stitches per-tile maps of one scene (row-major origin order, as produced by
/// tile_scene) into a full-scene map.
inline std::vector<float> stitch(const std::vector<std::vector<float>>& tile_maps, std::size_t height, std::size_t width,
                                 const data::TilingConfig& cfg) {
  const auto rows = data::tile_origins(height, cfg.tile, cfg.overlap);
  const auto cols = data::tile_origins(width, cfg.tile, cfg.overlap);
  if (tile_maps.size() != rows.size() * cols.size()) throw ShapeError("stitch", "tile count does not match the scene grid");
  const auto own_r = nearest_window(height, rows, cfg.tile);
  const auto own_c = nearest_window(width, cols, cfg.tile);
  std::vector<float> out(height * width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t kr = own_r[r], kc = own_c[c];
      const auto& m = tile_maps[kr * cols.size() + kc];
      out[r * width + c] = m[(r - rows[kr]) * cfg.tile + (c - cols[kc])];
    }
  return out;
}

/// Full-scene probability map: normalize, tile, predict, stitch.
inline std::vector<float> predict_scene(const data::SceneContainer& scene, const TilePredictor& predictor, const data::TilingConfig& cfg) {
  const auto tiles = data::prepare_tiles(scene, cfg);
  std::vector<const data::Tile*> ptrs;
  for (const auto& t : tiles) ptrs.push_back(&t);
  const auto maps = predictor(ptrs);
  if (maps.size() != tiles.size()) throw ShapeError("predict_scene", "predictor returned the wrong number of tiles");
  return stitch(maps, scene.height, scene.width, cfg);
}

/// Threshold frozen on a validation split.
struct FrozenThreshold {
  double value = 0.5;
  std::string source_split = "val";
};

struct SceneRow {
  std::string scene_id;
  std::uint64_t valid_pixels = 0;
  std::uint64_t fire_pixels = 0;
  EventCounts counts;
};

struct EvalReport {
  std::string split;
  APResult ap;
  FireF1 fire;
  double threshold = 0.5;
  std::string threshold_source;  // split the threshold was selected on
  std::vector<SceneRow> scenes;
  std::vector<PRPoint> pr_curve;

  ordered_json to_json() const {
    ordered_json j;
    j["split"] = split;
    j["ap"] = ap.defined ? ordered_json(ap.value) : ordered_json(nullptr);
    j["ap_defined"] = ap.defined;
    j["fire_f1"] = fire.f1;
    j["precision"] = fire.precision;
    j["recall"] = fire.recall;
    j["precision_defined"] = fire.precision_defined;
    j["threshold"] = threshold;
    j["threshold_source"] = threshold_source;
    j["n_events_gt"] = fire.counts.gt_events;
    j["n_events_pred"] = fire.counts.pred_events;
    j["n_events_detected"] = fire.counts.gt_detected;
    j["n_pred_true"] = fire.counts.pred_true;
    j["positives"] = ap.positives;
    j["negatives"] = ap.negatives;
    ordered_json rows = ordered_json::array();
    for (const auto& s : scenes)
      rows.push_back({{"scene_id", s.scene_id}, {"valid_pixels", s.valid_pixels}, {"fire_pixels", s.fire_pixels},
                      {"n_events_gt", s.counts.gt_events}, {"n_events_pred", s.counts.pred_events},
                      {"n_events_detected", s.counts.gt_detected}, {"n_pred_true", s.counts.pred_true}});
    j["scenes"] = rows;
    return j;
  }

  static EvalReport from_json(const ordered_json& j) {
    EvalReport r;
    r.split = j.at("split").get<std::string>();
    r.ap.defined = j.at("ap_defined").get<bool>();
    if (r.ap.defined) r.ap.value = j.at("ap").get<double>();
    r.ap.positives = j.value("positives", std::uint64_t{0});
    r.ap.negatives = j.value("negatives", std::uint64_t{0});
    r.fire.f1 = j.at("fire_f1").get<double>();
    r.fire.precision = j.at("precision").get<double>();
    r.fire.recall = j.at("recall").get<double>();
    r.fire.precision_defined = j.value("precision_defined", false);
    r.fire.counts.gt_events = j.at("n_events_gt").get<std::uint64_t>();
    r.fire.counts.pred_events = j.at("n_events_pred").get<std::uint64_t>();
    r.fire.counts.gt_detected = j.value("n_events_detected", std::uint64_t{0});
    r.fire.counts.pred_true = j.value("n_pred_true", std::uint64_t{0});
    r.fire.recall_defined = r.fire.counts.gt_events > 0;
    r.threshold = j.at("threshold").get<double>();
    r.threshold_source = j.at("threshold_source").get<std::string>();
    for (const auto& row : j.value("scenes", ordered_json::array())) {
      SceneRow s;
      s.scene_id = row.at("scene_id").get<std::string>();
      s.valid_pixels = row.at("valid_pixels").get<std::uint64_t>();
      s.fire_pixels = row.at("fire_pixels").get<std::uint64_t>();
      s.counts.gt_events = row.at("n_events_gt").get<std::uint64_t>();
      s.counts.pred_events = row.at("n_events_pred").get<std::uint64_t>();
      s.counts.gt_detected = row.value("n_events_detected", std::uint64_t{0});
      s.counts.pred_true = row.value("n_pred_true", std::uint64_t{0});
      r.scenes.push_back(s);
    }
    return r;
  }

  /// The threshold to carry into test evaluation. Only validation reports
  /// may supply one.
  FrozenThreshold frozen_threshold() const {
    if (split != "val") throw ConfigError("thresholds must come from a validation report, got split '" + split + "'");
    return {threshold, split};
  }
};

inline void save_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << r.to_json().dump(2) << '\n';
}

inline EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  try {
    return EvalReport::from_json(ordered_json::parse(f));
  } catch (const ordered_json::exception& e) {
    throw ConfigError("malformed report " + path.string() + ": " + e.what());
  }
}

inline void write_pr_csv(const std::vector<PRPoint>& curve, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "threshold,recall,precision\n";
  for (const auto& p : curve) f << p.threshold << ',' << p.recall << ',' << p.precision << '\n';
}

struct EvalOptions {
  data::TilingConfig tiling;
  std::size_t ap_bins = 4096;
  bool exact_ap = false;        // report the exact estimator instead of the binned one
  std::size_t threshold_steps = 100;
  std::size_t threads = 1;  // scene-level workers when a predictor factory is given
};

/// Builds an independent predictor for one worker thread.
using PredictorFactory = std::function<TilePredictor()>;

/// Full-stream evaluation of one split. Validation without a threshold selects
/// t* on itself; test requires a threshold frozen on validation.
/// Scene probabilities are computed by `opt.threads` workers, each with its
/// own predictor, in chunks; accumulation is serial in scene order so the
/// report does not depend on the thread count.
inline EvalReport full_stream_eval(const std::vector<data::SceneContainer>& scenes, const PredictorFactory& factory, const std::string& split,
                                   const std::optional<FrozenThreshold>& frozen, const EvalOptions& opt = {}) {
  if (frozen && frozen->source_split != "val")
    throw ConfigError("threshold source must be the validation split, got '" + frozen->source_split + "'");
  if (!frozen && split != "val") throw StateError("evaluating split '" + split + "' needs a threshold frozen on validation");
  if (frozen && !(frozen->value > 0.0 && frozen->value < 1.0)) throw ConfigError("threshold must be in (0, 1)");

  EvalReport rep;
  rep.split = split;
  APAccumulator acc(opt.ap_bins, opt.exact_ap);
  std::optional<ThresholdSweep> sweep;
  if (!frozen) sweep.emplace(opt.threshold_steps);
  std::vector<std::vector<EventCounts>> per_scene;  // sweep counts, indexed after selection
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.threads, scenes.size()));
  std::vector<TilePredictor> predictors;
  for (std::size_t w = 0; w < workers; ++w) predictors.push_back(factory());
  std::vector<std::vector<float>> chunk(workers);
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const std::size_t slot = si % workers;
    if (slot == 0) {
      const std::size_t m = std::min(workers, scenes.size() - si);
      if (m == 1) {
        chunk[0] = predict_scene(scenes[si], predictors[0], opt.tiling);
      } else {
        std::vector<std::exception_ptr> errors(m);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < m; ++w)
          pool.emplace_back([&, w] {
            try {
              chunk[w] = predict_scene(scenes[si + w], predictors[w], opt.tiling);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }
    }
    const auto& scene = scenes[si];
    const std::vector<float> probs = std::move(chunk[slot]);
    const std::size_t n = scene.pixels();
    acc.add_masked(probs.data(), scene.label_mask.data(), scene.valid_mask.data(), n);
    SceneRow row;
    row.scene_id = scene.scene_id;
    for (std::size_t i = 0; i < n; ++i) {
      row.valid_pixels += scene.valid_mask[i] != 0;
      row.fire_pixels += scene.valid_mask[i] && scene.label_mask[i];
    }
    if (frozen) {
      row.counts = fire_event_counts(probs.data(), scene.label_mask.data(), scene.valid_mask.data(), scene.height, scene.width, frozen->value);
    } else {
      per_scene.push_back(sweep->scene_counts(probs.data(), scene.label_mask.data(), scene.valid_mask.data(), scene.height, scene.width));
      sweep->add_counts(per_scene.back());
    }
    rep.scenes.push_back(std::move(row));
  }
  if (frozen) {
    rep.threshold = frozen->value;
    rep.threshold_source = frozen->source_split;
  } else {
    rep.threshold = sweep->select();
    rep.threshold_source = split;
    const std::size_t k = sweep->best_index();
    for (std::size_t s = 0; s < scenes.size(); ++s) rep.scenes[s].counts = per_scene[s][k];
  }
  EventCounts total;
  for (const auto& r : rep.scenes) total += r.counts;
  rep.fire = fire_f1_from_counts(total);
  rep.ap = opt.exact_ap ? acc.exact() : acc.binned();
  rep.pr_curve = acc.pr_curve();
  return rep;
}

/// Single-predictor form; runs on the calling thread.
inline EvalReport full_stream_eval(const std::vector<data::SceneContainer>& scenes, const TilePredictor& predictor, const std::string& split,
                                   const std::optional<FrozenThreshold>& frozen, EvalOptions opt = {}) {
  opt.threads = 1;
  return full_stream_eval(scenes, PredictorFactory([&predictor] { return predictor; }), split, frozen, opt);
}

}  // namespace firemae::eval
