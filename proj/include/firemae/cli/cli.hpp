#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "firemae/bench/bench.hpp"
#include "firemae/bench/pareto.hpp"
#include "firemae/core/threads.hpp"
#include "firemae/data/dataset.hpp"
#include "firemae/train/finetune.hpp"

namespace firemae::cli {

namespace fs = std::filesystem;

/// "HxW" -> (H, W).
inline std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  static const std::regex re(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ConfigError("--size must look like HxW, got '" + s + "'");
  return {std::stoul(m[1]), std::stoul(m[2])};
}

/// Architecture string "emb<D>+<head>[+refine]" -> untrained model spec.
inline std::optional<std::pair<mae::EncoderSpec, heads::HeadSpec>> parse_arch(const std::string& s) {
  static const std::regex re(R"(emb(\d+)\+(linear|trt|dwres)(\+refine)?)");
  std::smatch m;
  if (!std::regex_match(s, m, re)) return std::nullopt;
  heads::HeadSpec h;
  h.emb_dim = std::stoul(m[1]);
  h.kind = heads::parse_head_kind(m[2]);
  h.with_hr_refine = m[3].matched;
  return std::make_pair(mae::EncoderSpec{h.emb_dim, 8}, h);
}

struct LoadedModel {
  heads::SegModel<float> model;
  std::string id;
  std::optional<fs::path> dir;   // checkpoint directory when loaded from disk
  std::optional<data::TilingConfig> tiling;
  bool trained = true;
};

/// Checkpoint directory or architecture string (fresh, seed 0).
inline LoadedModel load_model(const std::string& spec) {
  LoadedModel lm;
  if (fs::is_directory(spec)) {
    const Checkpoint ck = Checkpoint::load(spec);
    if (!ck.config.contains("model")) throw ConfigError("checkpoint " + spec + " holds no segmentation model (an encoder-only pretraining checkpoint?)");
    lm.model = heads::SegModel<float>::from_checkpoint(ck);
    lm.dir = fs::path(spec);
    lm.id = fs::path(spec).lexically_normal().filename().string();
    if (lm.id.empty() || lm.id == ".") lm.id = fs::absolute(spec).lexically_normal().parent_path().filename().string();
    if (ck.config.contains("run")) lm.tiling = train::RunConfig::from_json(ck.config.at("run")).tiling;
    return lm;
  }
  if (auto arch = parse_arch(spec)) {
    lm.model = heads::SegModel<float>(arch->first, arch->second, 0);
    lm.id = spec;
    lm.trained = false;
    return lm;
  }
  throw ConfigError("--model must be a checkpoint directory or an architecture like emb32+trt, got '" + spec + "'");
}

inline void print_error(std::ostream& err, const std::string& kind, const std::string& msg) {
  ordered_json j{{"error", kind}, {"message", msg}};
  err << j.dump() << '\n';
}

/// Runs the command line; returns the process exit code.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dense masked-autoencoder pretraining, transfer, evaluation and benchmarking for thermal anomaly segmentation", "firemae"};
  app.require_subcommand(1, 1);

  // gen-data
  std::size_t n_scenes = 0;
  std::uint64_t data_seed = 0;
  std::string out_dir, size = "128x128";
  double prevalence = data::GeneratorConfig{}.prevalence, invalid_frac = data::GeneratorConfig{}.invalid_fraction;
  auto* gen = app.add_subcommand("gen-data", "Write synthetic scene containers and split.json");
  gen->add_option("--scenes", n_scenes, "number of scenes")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", data_seed, "dataset seed")->required();
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--size", size, "scene size HxW")->capture_default_str();
  gen->add_option("--prevalence", prevalence, "expected fire fraction of valid pixels")->capture_default_str();
  gen->add_option("--invalid-frac", invalid_frac, "target invalid fraction")->capture_default_str();

  // pretrain / finetune
  std::string config, data_dir, encoder, resume;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining from a run config");
  pre->add_option("--config", config, "run config JSON")->required();
  pre->add_option("--data", data_dir, "dataset directory")->required();
  pre->add_option("--out", out_dir, "run directory")->required();
  pre->add_option("--resume", resume, "epoch checkpoint to resume from");
  auto* fin = app.add_subcommand("finetune", "Supervised transfer from a run config");
  fin->add_option("--config", config, "run config JSON")->required();
  fin->add_option("--encoder", encoder, "pretraining checkpoint, or none")->required();
  fin->add_option("--data", data_dir, "dataset directory")->required();
  fin->add_option("--out", out_dir, "run directory")->required();
  fin->add_option("--resume", resume, "epoch checkpoint to resume from");

  // eval
  std::string model, split, threshold_from, out_file;
  std::optional<std::size_t> tile, overlap;
  bool exact_ap = false;
  auto* ev = app.add_subcommand("eval", "Full-stream AP and Fire-F1 on a split");
  ev->add_option("--model", model, "checkpoint directory, or oracle")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--split", split, "val or test")->required()->check(CLI::IsMember({"val", "test"}));
  ev->add_option("--threshold-from", threshold_from, "validation report supplying the frozen threshold");
  ev->add_option("--out", out_file, "report path (default: <model>/eval_<split>.json)");
  ev->add_option("--tile", tile, "tile size (default: the checkpoint run config, else 224 shrunk to the smallest scene)");
  ev->add_option("--overlap", overlap, "tile overlap");
  ev->add_flag("--exact-ap", exact_ap, "exact sort-based AP instead of the 4096-bin estimator");

  // bench
  bench::BenchConfig bc;
  std::string algo = "im2col", bench_id;
  auto* be = app.add_subcommand("bench", "Forward-pass latency and footprint");
  be->add_option("--model", model, "checkpoint directory or architecture (emb32+trt, emb32+dwres, emb64+dwres+refine, ...)")->required();
  be->add_option("--batch", bc.batch, "batch size")->capture_default_str()->check(CLI::PositiveNumber);
  be->add_option("--iters", bc.iters, "timed iterations")->capture_default_str();
  be->add_option("--warmup", bc.warmup, "discarded warmup iterations")->capture_default_str();
  be->add_option("--input", bc.input, "input side length")->capture_default_str();
  be->add_option("--algo", algo, "convolution path")->capture_default_str()->check(CLI::IsMember({"im2col", "direct"}));
  be->add_option("--id", bench_id, "model id in the result (default: checkpoint directory name)");
  be->add_option("--out", out_file, "result CSV (default: <model>/bench.csv)");

  // report
  std::string in_dir;
  auto* rep = app.add_subcommand("report", "Pareto table over bench results and evaluation reports");
  rep->add_option("--in", in_dir, "directory searched for bench.csv files")->required();
  rep->add_option("--out", out_file, "Pareto CSV path")->required();

  CLI::App* active = &app;
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
    for (auto* sub : app.get_subcommands()) active = sub;

    if (gen->parsed()) {
      data::GeneratorConfig g;
      std::tie(g.height, g.width) = parse_size(size);
      g.prevalence = prevalence;
      g.invalid_fraction = invalid_frac;
      // no-data blobs keep their size relative to the scene
      g.invalid_scale = std::min(g.invalid_scale, static_cast<double>(std::max(g.height, g.width)) / 4.0);
      g.validate();
      const auto scenes = data::generate_scenes(n_scenes, data_seed, g);
      const auto idx = data::write_dataset(scenes, out_dir);
      ordered_json meta{{"scenes", n_scenes}, {"seed", data_seed}, {"height", g.height}, {"width", g.width},
                        {"prevalence", g.prevalence}, {"invalid_fraction", g.invalid_fraction}};
      std::ofstream(fs::path(out_dir) / "dataset.json") << meta.dump(2) << '\n';
      out << ordered_json{{"out", out_dir}, {"train", idx.train.size()}, {"val", idx.val.size()}, {"test", idx.test.size()}}.dump() << '\n';
      return 0;
    }

    if (pre->parsed()) {
      const auto cfg = train::load_run_config(config);
      if (cfg.phase != train::Phase::pretrain) throw ConfigError("config phase is " + train::to_string(cfg.phase) + ", expected pretrain");
      const auto train_tiles = data::tile_scenes(data::load_scenes(data_dir, "train"), cfg.tiling);
      const auto val_tiles = data::tile_scenes(data::load_scenes(data_dir, "val"), cfg.tiling);
      train::PretrainOptions po;
      po.out_dir = out_dir;
      if (!resume.empty()) po.resume_from = resume;
      const auto res = train::pretrain(cfg, train_tiles, val_tiles, po);
      ordered_json j{{"best_checkpoint", res.best_checkpoint.string()}, {"epochs_run", res.epochs.size()},
                     {"early_stopped", res.early_stopped}, {"log_digest", hex64(res.log_digest)}, {"selection", res.selection.to_json()}};
      out << j.dump() << '\n';
      return 0;
    }

    if (fin->parsed()) {
      const auto cfg = train::load_run_config(config);
      if (cfg.phase != train::Phase::finetune) throw ConfigError("config phase is " + train::to_string(cfg.phase) + ", expected finetune");
      std::optional<Checkpoint> ck;
      if (encoder != "none") ck = Checkpoint::load(encoder);
      const auto train_tiles = data::tile_scenes(data::load_scenes(data_dir, "train"), cfg.tiling);
      const auto val = data::load_scenes(data_dir, "val");
      train::FinetuneOptions fo;
      fo.out_dir = out_dir;
      if (!resume.empty()) fo.resume_from = resume;
      const auto res = train::finetune(cfg, ck, train_tiles, val, fo);
      ordered_json j{{"best_checkpoint", res.best_checkpoint.string()}, {"epochs_run", res.epochs.size()},
                     {"early_stopped", res.early_stopped}, {"log_digest", hex64(res.log_digest)}, {"selection", res.selection.to_json()}};
      out << j.dump() << '\n';
      return 0;
    }

    if (ev->parsed()) {
      eval::EvalOptions eo;
      eo.exact_ap = exact_ap;
      eo.threads = configured_threads();
      std::optional<LoadedModel> lm;
      eval::PredictorFactory factory;
      if (model == "oracle") {
        factory = [] { return eval::oracle_predictor(); };
      } else {
        lm = load_model(model);
        if (!lm->trained) throw ConfigError("eval needs a trained checkpoint or oracle, got architecture '" + model + "'");
        if (lm->tiling) eo.tiling = *lm->tiling;
        // one model copy per worker thread
        auto proto = std::make_shared<heads::SegModel<float>>(lm->model);
        factory = [proto] {
          auto copy = std::make_shared<heads::SegModel<float>>(*proto);
          auto pred = eval::model_predictor(*copy);
          return eval::TilePredictor([copy, pred](const std::vector<const data::Tile*>& t) { return pred(t); });
        };
      }
      const auto scenes = data::load_scenes(data_dir, split);
      if (!tile && !(lm && lm->tiling)) {
        // no tiling from flags or checkpoint: the default tile, shrunk to fit the smallest scene
        std::size_t extent = eo.tiling.tile;
        for (const auto& sc : scenes) extent = std::min({extent, sc.height, sc.width});
        eo.tiling.tile = extent - extent % 2;
        eo.tiling.overlap = std::min(eo.tiling.overlap, eo.tiling.tile / 4);
      }
      if (tile) eo.tiling.tile = *tile;
      if (overlap) eo.tiling.overlap = *overlap;
      if (eo.tiling.tile == 0 || eo.tiling.tile % 2 || eo.tiling.overlap >= eo.tiling.tile)
        throw ConfigError("tile must be even, positive and larger than the overlap");
      std::optional<eval::FrozenThreshold> frozen;
      if (!threshold_from.empty()) frozen = eval::load_report(threshold_from).frozen_threshold();
      const auto report = eval::full_stream_eval(scenes, factory, split, frozen, eo);
      fs::path path = out_file.empty() ? (lm && lm->dir ? *lm->dir : fs::path(".")) / ("eval_" + split + ".json") : fs::path(out_file);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      eval::save_report(report, path);
      fs::path pr = path;
      pr.replace_extension("");
      eval::write_pr_csv(report.pr_curve, pr.string() + "_pr.csv");
      ordered_json j{{"report", path.string()}, {"split", split}, {"threshold", report.threshold}, {"threshold_source", report.threshold_source}};
      j["ap"] = report.ap.defined ? ordered_json(report.ap.value) : ordered_json(nullptr);
      j["fire_f1"] = report.fire.f1;
      out << j.dump() << '\n';
      return 0;
    }

    if (be->parsed()) {
      (void)configured_threads();  // validates DM_THREADS; the forward pass runs on one thread
      LoadedModel lm = load_model(model);
      bc.algo = algo == "direct" ? ConvAlgo::direct : ConvAlgo::im2col;
      bc.calibrate_norm = !lm.trained;
      auto r = bench::bench_forward(lm.model, bc, bench_id.empty() ? lm.id : bench_id);
      if (lm.dir) {
        for (const char* name : {"eval_test.json", "eval_val.json"})
          if (fs::exists(*lm.dir / name)) {
            const auto e = eval::load_report(*lm.dir / name);
            if (e.ap.defined) r.ap = e.ap.value;
            r.fire_f1 = e.fire.f1;
            break;
          }
      }
      const fs::path path = out_file.empty() ? (lm.dir ? *lm.dir / "bench.csv" : fs::path("bench.csv")) : fs::path(out_file);
      bench::write_bench_csv(r, path);
      out << bench::bench_csv_header() << '\n' << bench::bench_csv_row(r) << '\n';
      return 0;
    }

    if (rep->parsed()) {
      auto rows = bench::collect_pareto_rows(in_dir);
      if (rows.empty()) throw ConfigError("report: no bench.csv found under " + in_dir);
      bench::write_pareto_report(rows, out_file);
      out << bench::render_pareto_text(rows);
      return 0;
    }
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << (active ? active->help() : app.help());
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, e.get_name(), e.what());
    err << (active ? active->help() : app.help());
    return e.get_exit_code() ? e.get_exit_code() : 2;
  } catch (const ConfigError& e) {
    print_error(err, "ConfigError", e.what());
    err << active->help();
    return 2;
  } catch (const ShapeError& e) {
    print_error(err, "ShapeError", e.what());
    err << active->help();
    return 2;
  } catch (const StateError& e) {
    print_error(err, "StateError", e.what());
    return 3;
  } catch (const IoError& e) {
    print_error(err, "IoError", e.what());
    return 4;
  } catch (const NumericError& e) {
    print_error(err, "NumericError", e.what());
    return 5;
  } catch (const std::exception& e) {
    print_error(err, "Error", e.what());
    return 1;
  }
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace firemae::cli
