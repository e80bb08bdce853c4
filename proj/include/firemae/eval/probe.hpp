#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "firemae/core/activation.hpp"
#include "firemae/data/tiling.hpp"
#include "firemae/eval/ap.hpp"
#include "firemae/mae/encoder.hpp"

namespace firemae::eval {

struct ProbeConfig {
  std::size_t n_tiles = 512;
  std::size_t n_pos = 2048;
  std::size_t k = 50;
  std::uint64_t seed = 0;
  std::size_t epochs = 200;
  double lr = 0.1;
  std::size_t batch_tiles = 8;  // encoder batch during feature extraction
};

/// Full-resolution pixel reference inside a tile.
struct PixelRef {
  std::uint32_t tile = 0;
  std::uint32_t row = 0, col = 0;
  std::uint8_t label = 0;
};

/// Fixed sample of tiles and pixels. Built once per split, then reused for
/// every checkpoint so only the embeddings change between evaluations.
struct ProbePool {
  std::string split;
  std::uint64_t seed = 0;
  std::vector<std::size_t> tiles;  // indices into the split's tile list
  std::vector<PixelRef> pixels;    // positives first, then negatives
  std::size_t positives = 0;

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a(split.data(), split.size());
    h = fnv1a(tiles.data(), tiles.size() * sizeof(std::size_t), h);
    for (const auto& p : pixels) {
      const std::uint32_t rec[4] = {p.tile, p.row, p.col, p.label};
      h = fnv1a(rec, sizeof(rec), h);
    }
    return h;
  }
};

/// Picks up to n_tiles tiles, then up to n_pos labeled valid pixels and
/// k times as many valid background pixels from them.
inline ProbePool build_probe_pool(const std::vector<data::Tile>& tiles, const std::string& split, const ProbeConfig& cfg) {
  ProbePool pool;
  pool.split = split;
  pool.seed = cfg.seed;
  Rng rng = Rng::derive(cfg.seed, fnv1a(split.data(), split.size()));
  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(cfg.n_tiles, order.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
  order.resize(take);
  std::sort(order.begin(), order.end());
  pool.tiles = order;

  std::vector<PixelRef> pos;
  std::size_t valid_bg = 0;
  for (std::size_t ti = 0; ti < pool.tiles.size(); ++ti) {
    const auto& t = tiles[pool.tiles[ti]];
    for (std::size_t i = 0; i < t.pixels(); ++i) {
      if (!t.valid[i]) continue;
      if (t.label[i]) pos.push_back({static_cast<std::uint32_t>(ti), static_cast<std::uint32_t>(i / t.size), static_cast<std::uint32_t>(i % t.size), 1});
      else ++valid_bg;
    }
  }
  if (pos.empty()) throw ConfigError("probe pool for split '" + split + "' has no positive pixels");
  const std::size_t n_pos = std::min(cfg.n_pos, pos.size());
  for (std::size_t i = 0; i < n_pos; ++i) std::swap(pos[i], pos[i + rng.below(pos.size() - i)]);
  pos.resize(n_pos);
  pool.pixels = pos;
  pool.positives = n_pos;

  const std::size_t n_neg = std::min(cfg.k * n_pos, valid_bg);
  std::vector<std::uint8_t> used;
  std::vector<std::size_t> offsets(pool.tiles.size() + 1, 0);
  for (std::size_t ti = 0; ti < pool.tiles.size(); ++ti) offsets[ti + 1] = offsets[ti] + tiles[pool.tiles[ti]].pixels();
  used.assign(offsets.back(), 0);
  std::size_t got = 0;
  while (got < n_neg) {
    const std::size_t flat = rng.below(offsets.back());
    if (used[flat]) continue;
    const auto ti = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const auto& t = tiles[pool.tiles[ti]];
    const std::size_t i = flat - offsets[ti];
    used[flat] = 1;
    if (!t.valid[i] || t.label[i]) continue;
    pool.pixels.push_back({static_cast<std::uint32_t>(ti), static_cast<std::uint32_t>(i / t.size), static_cast<std::uint32_t>(i % t.size), 0});
    ++got;
  }
  return pool;
}

/// Embedding rows (pixels x D) for a pool; each pixel reads the half-
/// resolution cell that contains it.
template <typename T>
std::vector<double> extract_features(const mae::Encoder<T>& encoder, const std::vector<data::Tile>& tiles, const ProbePool& pool,
                                     std::size_t batch_tiles = 8) {
  const std::size_t d = encoder.emb_dim();
  std::vector<double> feats(pool.pixels.size() * d);
  std::vector<std::vector<std::size_t>> by_tile(pool.tiles.size());
  for (std::size_t p = 0; p < pool.pixels.size(); ++p) by_tile[pool.pixels[p].tile].push_back(p);
  NoGradGuard ng;
  for (std::size_t start = 0; start < pool.tiles.size(); start += batch_tiles) {
    const std::size_t end = std::min(pool.tiles.size(), start + batch_tiles);
    const std::size_t s = tiles[pool.tiles[start]].size;
    Tensor<T> x({end - start, 1, s, s});
    for (std::size_t b = start; b < end; ++b) {
      const auto& t = tiles[pool.tiles[b]];
      if (t.size != s) throw ShapeError("extract_features", "tiles must share one size");
      std::copy(t.patch.begin(), t.patch.end(), x.ptr() + (b - start) * s * s);
    }
    const Tensor<T> z = encoder(Var<T>(std::move(x))).z.value();
    const std::size_t hs = s / 2, hw = hs * hs;
    for (std::size_t b = start; b < end; ++b)
      for (std::size_t p : by_tile[b]) {
        const auto& px = pool.pixels[p];
        const std::size_t cell = (px.row / 2) * hs + px.col / 2;
        for (std::size_t c = 0; c < d; ++c) feats[p * d + c] = z[((b - start) * d + c) * hw + cell];
      }
  }
  return feats;
}

/// Logistic regression on standardized features, full-batch gradient descent.
struct LinearProbe {
  std::vector<double> mean, scale, w;
  double b = 0;

  static LinearProbe fit(const std::vector<double>& x, const std::vector<std::uint8_t>& y, std::size_t d, std::size_t epochs, double lr) {
    const std::size_t n = y.size();
    if (n == 0 || x.size() != n * d) throw ShapeError("LinearProbe::fit", "feature matrix does not match labels");
    LinearProbe m;
    m.mean.assign(d, 0);
    m.scale.assign(d, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) m.mean[c] += x[i * d + c];
    for (auto& v : m.mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) m.scale[c] += (x[i * d + c] - m.mean[c]) * (x[i * d + c] - m.mean[c]);
    for (auto& v : m.scale) v = 1.0 / std::max(std::sqrt(v / static_cast<double>(n)), 1e-12);
    std::vector<double> z(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) z[i * d + c] = (x[i * d + c] - m.mean[c]) * m.scale[c];

    m.w.assign(d, 0);
    std::vector<double> gw(d);
    for (std::size_t e = 0; e < epochs; ++e) {
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double s = m.b;
        for (std::size_t c = 0; c < d; ++c) s += m.w[c] * z[i * d + c];
        const double r = sigmoid(s) - static_cast<double>(y[i]);
        for (std::size_t c = 0; c < d; ++c) gw[c] += r * z[i * d + c];
        gb += r;
      }
      for (std::size_t c = 0; c < d; ++c) m.w[c] -= lr * gw[c] / static_cast<double>(n);
      m.b -= lr * gb / static_cast<double>(n);
    }
    return m;
  }

  double score(const double* row) const {
    double s = b;
    for (std::size_t c = 0; c < w.size(); ++c) s += w[c] * (row[c] - mean[c]) * scale[c];
    return sigmoid(s);
  }
};

inline std::vector<std::uint8_t> pool_labels(const ProbePool& pool) {
  std::vector<std::uint8_t> y(pool.pixels.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = pool.pixels[i].label;
  return y;
}

/// Trains on (x_train, y_train), returns exact AP on the validation rows.
inline APResult probe_ap_features(const std::vector<double>& x_train, const std::vector<std::uint8_t>& y_train,
                                  const std::vector<double>& x_val, const std::vector<std::uint8_t>& y_val, std::size_t d,
                                  const ProbeConfig& cfg) {
  const LinearProbe m = LinearProbe::fit(x_train, y_train, d, cfg.epochs, cfg.lr);
  std::vector<std::pair<float, std::uint8_t>> pairs(y_val.size());
  for (std::size_t i = 0; i < y_val.size(); ++i) pairs[i] = {static_cast<float>(m.score(&x_val[i * d])), y_val[i]};
  return exact_ap(std::move(pairs));
}

/// Probe AP for an encoder over fixed train/validation pools.
class ProbeEvaluator {
 public:
  ProbeEvaluator(const std::vector<data::Tile>& train_tiles, const std::vector<data::Tile>& val_tiles, const ProbeConfig& cfg)
      : train_tiles_(&train_tiles), val_tiles_(&val_tiles), cfg_(cfg),
        train_pool_(build_probe_pool(train_tiles, "train", cfg)), val_pool_(build_probe_pool(val_tiles, "val", cfg)) {}

  template <typename T>
  APResult evaluate(const mae::Encoder<T>& encoder) const {
    const std::size_t d = encoder.emb_dim();
    const auto xt = extract_features(encoder, *train_tiles_, train_pool_, cfg_.batch_tiles);
    const auto xv = extract_features(encoder, *val_tiles_, val_pool_, cfg_.batch_tiles);
    return probe_ap_features(xt, pool_labels(train_pool_), xv, pool_labels(val_pool_), d, cfg_);
  }

  const ProbePool& train_pool() const noexcept { return train_pool_; }
  const ProbePool& val_pool() const noexcept { return val_pool_; }

 private:
  const std::vector<data::Tile>* train_tiles_;
  const std::vector<data::Tile>* val_tiles_;
  ProbeConfig cfg_;
  ProbePool train_pool_, val_pool_;
};

}  // namespace firemae::eval
