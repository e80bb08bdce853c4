#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "firemae/heads/seg_model.hpp"

namespace firemae::bench {

struct BenchConfig {
  std::size_t batch = 8;
  std::size_t input = 224;
  std::size_t warmup = 10;
  std::size_t iters = 100;
  ConvAlgo algo = ConvAlgo::im2col;
  std::uint64_t input_seed = 0;
  bool calibrate_norm = false;  // one train-mode pass first, for untrained BatchNorm statistics
};

struct BenchResult {
  std::string model_id;
  std::size_t batch = 0;
  std::size_t input = 0;
  std::size_t warmup = 0;
  std::size_t threads = 1;
  std::string algo;
  std::vector<double> samples_ms;  // one per timed forward batch, warmup excluded
  double median_ms = 0;
  double p95_ms = 0;
  heads::Footprint footprint;
  std::optional<double> ap;
  std::optional<double> fire_f1;
};

/// Median of the samples; mean of the two middle values for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Nearest-rank percentile, q in (0, 100].
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline std::string model_label(heads::SegModel<float>& mm) {
  std::string s = "emb" + std::to_string(mm.encoder().spec().emb_dim) + "+" + heads::to_string(mm.head().spec().kind);
  if (mm.refine()) s += "+refine";
  return s;
}

/// Times eval-mode forward passes of a fixed random batch on the calling
/// thread. Warmup passes are run and discarded.
template <typename T>
BenchResult bench_forward(heads::SegModel<T>& model, const BenchConfig& cfg, const std::string& model_id = "") {
  if (cfg.iters == 0) throw ConfigError("bench: iters must be >= 1 (no latency samples otherwise)");
  if (cfg.batch == 0 || cfg.input == 0 || cfg.input % 2) throw ConfigError("bench: batch must be >= 1 and input a positive even size");
  Tensor<T> x({cfg.batch, 1, cfg.input, cfg.input});
  Rng rng(cfg.input_seed);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(rng.normal());
  const Var<T> in(std::move(x));

  const ScopedConvAlgo algo(cfg.algo);
  BenchResult r;
  {
    NoGradGuard ng;
    if (cfg.calibrate_norm) (void)model.forward(in, NormMode::train);
    for (std::size_t i = 0; i < cfg.warmup; ++i) (void)model.forward(in, NormMode::eval);
    r.samples_ms.reserve(cfg.iters);
    for (std::size_t i = 0; i < cfg.iters; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = model.forward(in, NormMode::eval);
      const auto t1 = std::chrono::steady_clock::now();
      if (out.surface.value().size() == 0) throw StateError("bench: empty forward output");
      r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }

  r.model_id = model_id;
  r.batch = cfg.batch;
  r.input = cfg.input;
  r.warmup = cfg.warmup;
  r.threads = 1;
  r.algo = cfg.algo == ConvAlgo::im2col ? "im2col" : "direct";
  r.median_ms = median(r.samples_ms);
  r.p95_ms = percentile(r.samples_ms, 95.0);
  r.footprint = heads::count_params_and_footprint<T>(model);
  return r;
}

/// Benchmarks several models in interleaved rounds (the starting model rotates
/// each round) so slow drift in machine state is shared across models.
template <typename T>
std::vector<BenchResult> bench_compare(const std::vector<std::pair<std::string, heads::SegModel<T>*>>& models, const BenchConfig& cfg) {
  if (cfg.iters == 0) throw ConfigError("bench: iters must be >= 1 (no latency samples otherwise)");
  if (models.empty()) throw ConfigError("bench_compare: no models");
  BenchConfig one = cfg;
  one.iters = 1;
  std::vector<BenchResult> res;
  for (const auto& [id, m] : models) {
    res.push_back(bench_forward(*m, one, id));
    res.back().samples_ms.clear();
  }
  one.warmup = 0;
  one.calibrate_norm = false;
  for (std::size_t it = 0; it < cfg.iters; ++it)
    for (std::size_t k = 0; k < models.size(); ++k) {
      const std::size_t i = (it + k) % models.size();
      res[i].samples_ms.push_back(bench_forward(*models[i].second, one, models[i].first).samples_ms.front());
    }
  for (auto& r : res) {
    r.median_ms = median(r.samples_ms);
    r.p95_ms = percentile(r.samples_ms, 95.0);
  }
  return res;
}

// ---- CSV -------------------------------------------------------------------

inline const char* bench_csv_header() {
  return "model_id,batch,input,warmup,iters,threads,algo,median_ms,p95_ms,params,fp16_bytes,ap,fire_f1";
}

inline std::string fmt_num(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// metric columns round-trip exactly
inline std::string opt_num(const std::optional<double>& v) { return v ? fmt_num(*v, std::numeric_limits<double>::max_digits10) : std::string(); }

inline std::string bench_csv_row(const BenchResult& r) {
  std::ostringstream os;
  os << r.model_id << ',' << r.batch << ',' << r.input << ',' << r.warmup << ',' << r.samples_ms.size() << ',' << r.threads << ','
     << r.algo << ',' << fmt_num(r.median_ms) << ',' << fmt_num(r.p95_ms) << ',' << r.footprint.params << ','
     << r.footprint.fp16_bytes << ',' << opt_num(r.ap) << ',' << opt_num(r.fire_f1);
  return os.str();
}

/// Summary row plus the raw samples in a sibling file.
inline void write_bench_csv(const BenchResult& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << bench_csv_header() << '\n' << bench_csv_row(r) << '\n';
  std::filesystem::path samples = path;
  samples.replace_extension(".samples.csv");
  std::ofstream s(samples);
  if (!s) throw IoError("cannot write " + samples.string());
  s << "iter,latency_ms\n";
  for (std::size_t i = 0; i < r.samples_ms.size(); ++i) s << i << ',' << fmt_num(r.samples_ms[i], 9) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

/// Reads the summary row written by write_bench_csv (samples are not reloaded).
inline BenchResult read_bench_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string header, line;
  std::getline(f, header);
  std::getline(f, line);
  if (header != bench_csv_header()) throw IoError(path.string() + ": not a bench result CSV");
  const auto c = split_csv_line(line);
  if (c.size() != 13) throw IoError(path.string() + ": expected 13 columns");
  try {
    BenchResult r;
    r.model_id = c[0];
    r.batch = std::stoul(c[1]);
    r.input = std::stoul(c[2]);
    r.warmup = std::stoul(c[3]);
    r.threads = std::stoul(c[5]);
    r.algo = c[6];
    r.median_ms = std::stod(c[7]);
    r.p95_ms = std::stod(c[8]);
    r.footprint.params = std::stoul(c[9]);
    r.footprint.fp16_bytes = std::stoul(c[10]);
    r.footprint.fp32_bytes = 2 * r.footprint.fp16_bytes;
    if (!c[11].empty()) r.ap = std::stod(c[11]);
    if (!c[12].empty()) r.fire_f1 = std::stod(c[12]);
    return r;
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed bench row");
  }
}

}  // namespace firemae::bench
