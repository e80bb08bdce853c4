#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "firemae/data/generator.hpp"
#include "firemae/eval/ap.hpp"
#include "firemae/eval/cluster.hpp"
#include "firemae/eval/components.hpp"
#include "firemae/eval/fire_f1.hpp"
#include "firemae/eval/full_stream.hpp"
#include "firemae/eval/probe.hpp"

using namespace firemae;
using namespace firemae::eval;

namespace {

using Pairs = std::vector<std::pair<float, std::uint8_t>>;

Pairs random_stream(Rng& rng, std::size_t n) {
  const double prev = rng.uniform(0.01, 0.5);
  const double shift = rng.uniform(0.0, 3.0);
  Pairs p(n);
  for (auto& [s, y] : p) {
    y = rng.bernoulli(prev);
    s = static_cast<float>(sigmoid(rng.normal() + (y ? shift : 0.0)));
  }
  return p;
}

/// Recursive 8-neighbour flood fill, seeds visited in raster order.
std::vector<std::uint32_t> flood_oracle(const std::vector<std::uint8_t>& m, const std::vector<std::uint8_t>& v, int h, int w) {
  std::vector<std::uint32_t> lab(m.size(), 0);
  std::uint32_t next = 0;
  std::function<void(int, int)> fill = [&](int r, int c) {
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
        const int j = rr * w + cc;
        if (!m[j] || !v[j] || lab[j]) continue;
        lab[j] = next;
        fill(rr, cc);
      }
  };
  for (int i = 0; i < h * w; ++i)
    if (m[i] && v[i] && !lab[i]) {
      lab[i] = ++next;
      fill(i / w, i % w);
    }
  return lab;
}

data::SceneContainer blank_scene(std::size_t h, std::size_t w, const std::string& id = "s") {
  data::SceneContainer s;
  s.scene_id = id;
  s.height = h;
  s.width = w;
  s.raster.assign(h * w, 0.0f);
  s.valid_mask.assign(h * w, 1);
  s.label_mask.assign(h * w, 0);
  return s;
}

data::GeneratorConfig small_cfg(std::size_t n) {
  data::GeneratorConfig c;
  c.height = c.width = n;
  c.prevalence = 4e-3;
  return c;
}

}  // namespace

// ---- pixel AP ----

TEST(PixelAP, PerfectSeparationIsOne) {
  APAccumulator acc(4096, true);
  for (int i = 0; i < 100; ++i) acc.add(0.9f + 0.0009f * static_cast<float>(i % 10), true);
  for (int i = 0; i < 1000; ++i) acc.add(0.1f * static_cast<float>(i % 9) / 9.0f, false);
  EXPECT_DOUBLE_EQ(acc.binned().value, 1.0);
  EXPECT_DOUBLE_EQ(acc.exact().value, 1.0);
}

TEST(PixelAP, EqualScoresGivePrevalence) {
  APAccumulator acc(4096, true);
  for (int i = 0; i < 1000; ++i) acc.add(0.5f, i % 8 == 0);
  EXPECT_DOUBLE_EQ(acc.binned().value, 0.125);
  EXPECT_DOUBLE_EQ(acc.exact().value, 0.125);
}

TEST(PixelAP, NoPositivesIsUndefined) {
  APAccumulator acc;
  acc.add(0.3f, false);
  const auto r = acc.binned();
  EXPECT_FALSE(r.defined);
  EXPECT_TRUE(std::isnan(r.value));
  EXPECT_THROW(acc.exact(), StateError);
}

TEST(PixelAP, HandComputedStepAP) {
  // ranking: +, -, +, -  -> AP = 0.5*1 + 0.5*(2/3)
  const Pairs p{{0.9f, 1}, {0.8f, 0}, {0.7f, 1}, {0.6f, 0}};
  EXPECT_NEAR(exact_ap(p).value, 0.5 + 1.0 / 3.0, 1e-15);
}

TEST(PixelAP, BinnedTracksExactOnRandomStreams) {
  Rng rng(2024);
  double worst = 0;
  int over = 0;
  for (int s = 0; s < 2000; ++s) {
    const auto p = random_stream(rng, 10000);
    APAccumulator acc(4096, true);
    for (const auto& [sc, y] : p) acc.add(sc, y);
    const double d = std::abs(acc.binned().value - acc.exact().value);
    worst = std::max(worst, d);
    over += d > 1e-3;
  }
  EXPECT_LE(worst, 1e-3) << over << " of 2000 streams exceed the bound";
}

TEST(PixelAP, MergeMatchesConcatenationAndIsAssociative) {
  Rng rng(5);
  APAccumulator a, b, c, all;
  for (auto* acc : {&a, &b, &c})
    for (const auto& [s, y] : random_stream(rng, 500)) {
      acc->add(s, y);
      all.add(s, y);
    }
  APAccumulator left = a, right = b;
  left.merge(b);
  left.merge(c);
  right.merge(c);
  APAccumulator r2 = a;
  r2.merge(right);
  EXPECT_EQ(left.positive_counts(), r2.positive_counts());
  EXPECT_EQ(left.negative_counts(), r2.negative_counts());
  EXPECT_EQ(left.positive_counts(), all.positive_counts());
  EXPECT_EQ(left.negative_counts(), all.negative_counts());
}

TEST(PixelAP, ExactInvariantToMonotoneTransform) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Pairs p(400), q(400);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto k = static_cast<float>(rng.below(1024));
      const std::uint8_t y = rng.bernoulli(0.2 + 0.5 * k / 1024.0);
      p[i] = {k / 1024.0f, y};
      q[i] = {k * k / 1048576.0f - 3.0f, y};  // strictly increasing, exact in float
    }
    EXPECT_EQ(exact_ap(p).value, exact_ap(q).value);
  }
}

TEST(PixelAP, MaskedAddSkipsInvalid) {
  const std::vector<float> s{0.9f, 0.1f, 0.8f};
  const std::vector<std::uint8_t> y{1, 1, 0}, v{1, 0, 1};
  APAccumulator acc;
  acc.add_masked(s.data(), y.data(), v.data(), 3);
  EXPECT_EQ(acc.binned().positives, 1u);
  EXPECT_EQ(acc.binned().negatives, 1u);
  EXPECT_DOUBLE_EQ(acc.binned().value, 1.0);
}

// ---- connected components ----

TEST(Components, DiagonalPixelsJoin) {
  const std::vector<std::uint8_t> m{1, 0, 0, 1}, v{1, 1, 1, 1};
  EXPECT_EQ(connected_components(m, v, 2, 2).size(), 1u);
}

TEST(Components, InvalidFourPathDoesNotSplitDiagonal) {
  const std::vector<std::uint8_t> m{1, 1, 1, 1}, v{1, 0, 0, 1};
  const auto ev = connected_components(m, v, 2, 2);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].pixels, (std::vector<std::size_t>{0, 3}));
}

TEST(Components, IdsFollowRasterOrderOfFirstPixel) {
  // U shape merges late; the separate blob at (0,4) starts between its arms
  const std::vector<std::uint8_t> m{1, 0, 1, 0, 1,  //
                                    1, 0, 1, 0, 0,  //
                                    1, 1, 1, 0, 0};
  const Labeling lab = label_components(m.data(), nullptr, 3, 5);
  EXPECT_EQ(lab.count, 2u);
  EXPECT_EQ(lab.labels[0], 1u);
  EXPECT_EQ(lab.labels[2], 1u);
  EXPECT_EQ(lab.labels[4], 2u);
}

TEST(Components, MatchesFloodFillOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 64;
    const double density = rng.uniform(0.05, 0.6);
    const double invalid = trial % 2 ? rng.uniform(0.0, 0.3) : 0.0;
    std::vector<std::uint8_t> m(n * n), v(n * n);
    for (int i = 0; i < n * n; ++i) {
      m[i] = rng.bernoulli(density);
      v[i] = !rng.bernoulli(invalid);
    }
    const Labeling lab = label_components(m.data(), v.data(), n, n);
    ASSERT_EQ(lab.labels, flood_oracle(m, v, n, n)) << "trial " << trial;
  }
}

TEST(Components, PartitionOfMaskAndValid) {
  Rng rng(3);
  const std::size_t n = 48;
  std::vector<std::uint8_t> m(n * n), v(n * n);
  for (std::size_t i = 0; i < n * n; ++i) {
    m[i] = rng.bernoulli(0.3);
    v[i] = rng.bernoulli(0.85);
  }
  const auto ev = connected_components(m, v, n, n);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& e : ev) {
    for (std::size_t p : e.pixels) {
      EXPECT_TRUE(m[p] && v[p]);
      seen.insert(p);
      EXPECT_GE(p / n, e.row0);
      EXPECT_LE(p / n, e.row1);
    }
    total += e.size();
  }
  EXPECT_EQ(seen.size(), total);
  std::size_t on = 0;
  for (std::size_t i = 0; i < n * n; ++i) on += m[i] && v[i];
  EXPECT_EQ(total, on);
}

// ---- Fire-F1 ----

namespace {

struct Grid {
  std::size_t h = 8, w = 8;
  std::vector<float> p = std::vector<float>(64, 0.0f);
  std::vector<std::uint8_t> y = std::vector<std::uint8_t>(64, 0), v = std::vector<std::uint8_t>(64, 1);
  void gt(std::size_t r, std::size_t c) { y[r * w + c] = 1; }
  void pred(std::size_t r, std::size_t c, float val = 0.9f) { p[r * w + c] = val; }
};

}  // namespace

TEST(FireF1, PredictionEqualToTruth) {
  Grid g;
  for (auto [r, c] : {std::pair{1, 1}, {1, 2}, {5, 5}, {6, 6}}) {
    g.gt(r, c);
    g.pred(r, c);
  }
  const auto f = fire_f1(g.p, g.y, g.v, g.h, g.w, 0.5);
  EXPECT_EQ(f.counts.gt_events, 2u);
  EXPECT_DOUBLE_EQ(f.precision, 1.0);
  EXPECT_DOUBLE_EQ(f.recall, 1.0);
  EXPECT_DOUBLE_EQ(f.f1, 1.0);
}

TEST(FireF1, OneHitOneMissOneSpurious) {
  Grid g;
  g.gt(1, 1);
  g.gt(6, 6);
  g.pred(1, 1);
  g.pred(3, 6);
  const auto f = fire_f1(g.p, g.y, g.v, g.h, g.w, 0.5);
  EXPECT_EQ(f.counts.gt_events, 2u);
  EXPECT_EQ(f.counts.pred_events, 2u);
  EXPECT_DOUBLE_EQ(f.recall, 0.5);
  EXPECT_DOUBLE_EQ(f.precision, 0.5);
  EXPECT_DOUBLE_EQ(f.f1, 0.5);
}

TEST(FireF1, OnePredictionSpanningTwoEvents) {
  Grid g;
  g.gt(2, 1);
  g.gt(2, 5);
  for (std::size_t c = 1; c <= 5; ++c) g.pred(2, c);
  const auto f = fire_f1(g.p, g.y, g.v, g.h, g.w, 0.5);
  EXPECT_EQ(f.counts.gt_events, 2u);
  EXPECT_EQ(f.counts.pred_events, 1u);
  EXPECT_DOUBLE_EQ(f.recall, 1.0);
  EXPECT_DOUBLE_EQ(f.precision, 1.0);
}

TEST(FireF1, EmptyPredictionFlagsPrecision) {
  Grid g;
  g.gt(3, 3);
  const auto f = fire_f1(g.p, g.y, g.v, g.h, g.w, 0.5);
  EXPECT_FALSE(f.precision_defined);
  EXPECT_DOUBLE_EQ(f.f1, 0.0);
  EXPECT_DOUBLE_EQ(f.recall, 0.0);
}

TEST(FireF1, InvalidPixelsExcludedFromBothSides) {
  Grid g;
  g.gt(3, 3);
  g.pred(3, 3);
  g.pred(0, 7);
  g.v[3 * 8 + 3] = 0;
  g.v[7] = 0;
  const auto f = fire_f1(g.p, g.y, g.v, g.h, g.w, 0.5);
  EXPECT_EQ(f.counts.gt_events, 0u);
  EXPECT_EQ(f.counts.pred_events, 0u);
}

TEST(FireF1, ThresholdOutsideOpenIntervalThrows) {
  Grid g;
  EXPECT_THROW(fire_f1(g.p, g.y, g.v, g.h, g.w, 0.0), ConfigError);
  EXPECT_THROW(fire_f1(g.p, g.y, g.v, g.h, g.w, 1.0), ConfigError);
}

TEST(FireF1, RecallNonIncreasingInThreshold) {
  Rng rng(12);
  const std::size_t n = 64;
  std::vector<float> p(n * n);
  std::vector<std::uint8_t> y(n * n), v(n * n, 1);
  for (std::size_t i = 0; i < n * n; ++i) {
    y[i] = rng.bernoulli(0.03);
    p[i] = static_cast<float>(rng.uniform());
  }
  double prev = 2;
  for (int k = 1; k < 100; ++k) {
    const double r = fire_f1(p, y, v, n, n, k / 100.0).recall;
    EXPECT_LE(r, prev);
    prev = r;
  }
}

// ---- threshold selection ----

TEST(Threshold, PlateauTieGoesToLargestT) {
  Grid g;
  g.p.assign(64, 0.1f);
  g.gt(2, 2);
  g.pred(2, 2, 0.8f);
  ThresholdSweep sw;
  sw.add_scene(g.p.data(), g.y.data(), g.v.data(), g.h, g.w);
  EXPECT_DOUBLE_EQ(sw.select(), 0.80);
}

TEST(Threshold, RecallBoundsSelectionBySingleEventMax) {
  Grid g;
  g.gt(4, 4);
  g.gt(4, 5);
  g.pred(4, 4, 0.3f);
  g.pred(4, 5, 0.2f);
  ThresholdSweep sw;
  sw.add_scene(g.p.data(), g.y.data(), g.v.data(), g.h, g.w);
  EXPECT_LE(sw.select(), 0.30);
}

TEST(Threshold, NoEventsIsAnError) {
  Grid g;
  ThresholdSweep sw;
  sw.add_scene(g.p.data(), g.y.data(), g.v.data(), g.h, g.w);
  EXPECT_THROW(sw.select(), ConfigError);
}

TEST(Threshold, SelectedF1DominatesGridAndNearFineGrid) {
  Rng rng(31);
  ThresholdSweep coarse(100), fine(1000);
  for (int s = 0; s < 6; ++s) {
    auto scene = data::gen_synthetic_scene(500 + static_cast<std::uint64_t>(s), small_cfg(128));
    std::vector<float> p(scene.pixels());
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] = static_cast<float>(sigmoid(1.5 * rng.normal() + (scene.label_mask[i] ? 2.0 : -2.5)));
    coarse.add_scene(p.data(), scene.label_mask.data(), scene.valid_mask.data(), scene.height, scene.width);
    fine.add_scene(p.data(), scene.label_mask.data(), scene.valid_mask.data(), scene.height, scene.width);
  }
  const double best = coarse.at(coarse.best_index()).f1;
  for (std::size_t k = 0; k < coarse.size(); ++k) EXPECT_GE(best, coarse.at(k).f1);
  EXPECT_LE(fine.at(fine.best_index()).f1 - best, 0.005);
}

// ---- cluster matching ----

TEST(ClusterMatch, IdenticalListsAllJoint) {
  const auto sc = build_match_scenario(20, 0, 0, 4);
  const auto m = cluster_match(sc.a, sc.a);
  EXPECT_EQ(m.joint, 20u);
  EXPECT_EQ(m.a_only, 0u);
  EXPECT_EQ(m.b_only, 0u);
}

TEST(ClusterMatch, TwiceRadiusBoundary) {
  const std::vector<Detection> a{{0, 0, 100}};
  auto m = cluster_match(a, {{1599, 0, 100}});
  EXPECT_EQ(m.joint, 1u);
  m = cluster_match(a, {{1601, 0, 100}});
  EXPECT_EQ(m.joint, 0u);
  EXPECT_EQ(m.a_only, 1u);
  EXPECT_EQ(m.b_only, 1u);
}

TEST(ClusterMatch, TimeWindowBoundary) {
  const std::vector<Detection> a{{0, 0, 1000}};
  EXPECT_EQ(cluster_match(a, {{10, 0, 1600}}).joint, 1u);
  EXPECT_EQ(cluster_match(a, {{10, 0, 1601}}).joint, 0u);
}

TEST(ClusterMatch, BufferChainsMergeWithinSource) {
  const std::vector<Detection> a{{0, 0, 0}, {1500, 0, 0}, {3000, 0, 0}, {9000, 0, 0}};
  const auto cl = buffer_clusters(a, 800);
  ASSERT_EQ(cl.size(), 2u);
  EXPECT_EQ(cl[0].members, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ClusterMatch, SymmetricUnderSwap) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Detection> a(40), b(30);
    for (auto* v : {&a, &b})
      for (auto& d : *v) d = {rng.uniform(0, 20000), rng.uniform(0, 20000), static_cast<std::int64_t>(rng.below(3000))};
    const auto ab = cluster_match(a, b), ba = cluster_match(b, a);
    EXPECT_EQ(ab.joint, ba.joint);
    EXPECT_EQ(ab.a_only, ba.b_only);
    EXPECT_EQ(ab.b_only, ba.a_only);
  }
}

TEST(ClusterMatch, RecoversConstructedPattern) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sc = build_match_scenario(103, 33, 3, seed);
    const auto m = cluster_match(sc.a, sc.b);
    EXPECT_EQ(m.joint, 103u);
    EXPECT_EQ(m.b_only, 33u);
    EXPECT_EQ(m.a_only, 3u);
  }
}

// ---- probe ----

TEST(Probe, SeparableFeaturesGiveUnitAP) {
  Rng rng(1);
  const std::size_t d = 4;
  auto make = [&](std::size_t n, std::vector<double>& x, std::vector<std::uint8_t>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t lab = i % 10 == 0;
      y.push_back(lab);
      for (std::size_t c = 0; c < d; ++c) x.push_back(rng.normal() * 0.3 + (c == 0 ? (lab ? 2.0 : -2.0) : 0.0));
    }
  };
  std::vector<double> xt, xv;
  std::vector<std::uint8_t> yt, yv;
  make(2000, xt, yt);
  make(2000, xv, yv);
  EXPECT_DOUBLE_EQ(probe_ap_features(xt, yt, xv, yv, d, ProbeConfig{}).value, 1.0);
}

TEST(Probe, ShuffledLabelsGivePositiveFraction) {
  Rng rng(2);
  const std::size_t d = 8, k = 50, pos = 2048, n = pos * (1 + k);
  auto make = [&](std::vector<double>& x, std::vector<std::uint8_t>& y) {
    y.assign(n, 0);
    std::fill(y.begin(), y.begin() + pos, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) x.push_back(rng.normal() + (y[i] && c < 2 ? 1.5 : 0.0));
    for (std::size_t i = n; i > 1; --i) std::swap(y[i - 1], y[rng.below(i)]);  // break the feature-label link
  };
  std::vector<double> xt, xv;
  std::vector<std::uint8_t> yt, yv;
  make(xt, yt);
  make(xv, yv);
  const double ap = probe_ap_features(xt, yt, xv, yv, d, ProbeConfig{}).value;
  EXPECT_NEAR(ap, 1.0 / (1.0 + static_cast<double>(k)), 0.02);
}

namespace {

std::vector<data::Tile> small_tiles(std::uint64_t seed, std::size_t scenes) {
  std::vector<data::Tile> out;
  for (std::size_t s = 0; s < scenes; ++s) {
    const auto scene = data::gen_synthetic_scene(seed + s, small_cfg(64));
    for (auto& t : data::prepare_tiles(scene, {32, 0}, s)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST(Probe, PoolsFixedAcrossCheckpoints) {
  const auto train = small_tiles(100, 4), val = small_tiles(200, 4);
  ProbeConfig cfg;
  cfg.n_tiles = 12;
  cfg.n_pos = 40;
  cfg.k = 5;
  cfg.epochs = 50;
  const ProbeEvaluator ev(train, val, cfg);
  EXPECT_EQ(ev.train_pool().digest(), build_probe_pool(train, "train", cfg).digest());
  EXPECT_NE(ev.train_pool().digest(), ev.val_pool().digest());
  EXPECT_GT(ev.val_pool().positives, 0u);
  EXPECT_EQ(ev.val_pool().pixels.size(), ev.val_pool().positives * (1 + cfg.k));

  mae::Encoder<float> a({32, 8}, 1), b({32, 8}, 2);
  const std::uint64_t before = ev.train_pool().digest();
  const auto ap_a1 = ev.evaluate(a);
  const auto ap_b = ev.evaluate(b);
  const auto ap_a2 = ev.evaluate(a);
  EXPECT_EQ(ev.train_pool().digest(), before);
  EXPECT_EQ(ap_a1.value, ap_a2.value);
  EXPECT_TRUE(ap_b.defined);
}

TEST(Probe, PoolWithoutPositivesThrows) {
  auto tiles = small_tiles(100, 1);
  for (auto& t : tiles) std::fill(t.label.begin(), t.label.end(), 0);
  EXPECT_THROW(build_probe_pool(tiles, "train", ProbeConfig{}), ConfigError);
}

// ---- full-stream evaluation ----

TEST(Stitch, NearestCentreOwnership) {
  // origins 0, 12, 24 for tile 16 on extent 40
  const auto o = data::tile_origins(40, 16, 4);
  ASSERT_EQ(o, (std::vector<std::size_t>{0, 12, 24}));
  const auto own = nearest_window(40, o, 16);
  // centres at 7.5, 19.5, 31.5; midpoints 13.5 and 25.5
  EXPECT_EQ(own[13], 0u);
  EXPECT_EQ(own[14], 1u);
  EXPECT_EQ(own[25], 1u);
  EXPECT_EQ(own[26], 2u);
  EXPECT_EQ(own[39], 2u);
}

TEST(Stitch, PointwiseModelIsTileIndependent) {
  auto scene = data::gen_synthetic_scene(3, small_cfg(96));
  const data::TilingConfig cfg{32, 8};
  const auto pointwise = [](const std::vector<const data::Tile*>& tiles) {
    std::vector<std::vector<float>> out;
    for (const auto* t : tiles) {
      std::vector<float> p(t->pixels());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(sigmoid(t->patch[i]));
      out.push_back(std::move(p));
    }
    return out;
  };
  const auto stitched = predict_scene(scene, pointwise, cfg);
  const auto norm = data::RobustScaler::fit(scene).apply(scene);
  for (std::size_t i = 0; i < norm.size(); ++i) ASSERT_EQ(stitched[i], static_cast<float>(sigmoid(norm[i])));
}

TEST(Stitch, EachPixelComesFromNearestTile) {
  const auto scene = blank_scene(40, 40);
  const data::TilingConfig cfg{16, 4};
  const auto tag = [](const std::vector<const data::Tile*>& tiles) {
    std::vector<std::vector<float>> out;
    for (std::size_t k = 0; k < tiles.size(); ++k) out.emplace_back(tiles[k]->pixels(), static_cast<float>(k));
    return out;
  };
  const auto m = predict_scene(scene, tag, cfg);
  EXPECT_EQ(m[13 * 40 + 13], 0.0f);
  EXPECT_EQ(m[14 * 40 + 13], 3.0f);
  EXPECT_EQ(m[26 * 40 + 26], 8.0f);
}

namespace {

std::vector<data::SceneContainer> eval_scenes(std::uint64_t seed, std::size_t n) {
  std::vector<data::SceneContainer> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = data::gen_synthetic_scene(seed + i, small_cfg(96));
    s.scene_id = "scene_" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(FullStream, OracleModelScoresPerfectly) {
  const auto scenes = eval_scenes(40, 3);
  const EvalOptions opt{{32, 8}};
  const auto val = full_stream_eval(scenes, oracle_predictor(), "val", std::nullopt, opt);
  EXPECT_DOUBLE_EQ(val.ap.value, 1.0);
  EXPECT_DOUBLE_EQ(val.fire.f1, 1.0);
  EXPECT_EQ(val.threshold_source, "val");
  const auto test = full_stream_eval(eval_scenes(80, 3), oracle_predictor(), "test", val.frozen_threshold(), opt);
  EXPECT_DOUBLE_EQ(test.ap.value, 1.0);
  EXPECT_DOUBLE_EQ(test.fire.f1, 1.0);
  EXPECT_EQ(test.threshold_source, "val");
  EXPECT_EQ(test.threshold, val.threshold);
}

TEST(FullStream, ConstantModelGivesPrevalence) {
  const auto scenes = eval_scenes(40, 3);
  const EvalOptions opt{{32, 8}};
  const auto r = full_stream_eval(scenes, constant_predictor(0.5f), "test", FrozenThreshold{0.6, "val"}, opt);
  std::uint64_t pos = 0, valid = 0;
  for (const auto& s : scenes)
    for (std::size_t i = 0; i < s.pixels(); ++i) {
      valid += s.valid_mask[i] != 0;
      pos += s.valid_mask[i] && s.label_mask[i];
    }
  EXPECT_DOUBLE_EQ(r.ap.value, static_cast<double>(pos) / static_cast<double>(valid));
  EXPECT_DOUBLE_EQ(r.fire.f1, 0.0);
  EXPECT_EQ(r.fire.counts.pred_events, 0u);
}

TEST(FullStream, TestSplitNeedsValidationThreshold) {
  const auto scenes = eval_scenes(40, 1);
  const EvalOptions opt{{32, 8}};
  EXPECT_THROW(full_stream_eval(scenes, oracle_predictor(), "test", std::nullopt, opt), StateError);
  EXPECT_THROW(full_stream_eval(scenes, oracle_predictor(), "test", FrozenThreshold{0.5, "test"}, opt), ConfigError);
  const auto test = full_stream_eval(scenes, oracle_predictor(), "test", FrozenThreshold{0.5, "val"}, opt);
  EXPECT_THROW(test.frozen_threshold(), ConfigError);
}

TEST(FullStream, ReportJsonRoundTrip) {
  const auto scenes = eval_scenes(40, 2);
  const auto r = full_stream_eval(scenes, constant_predictor(0.3f), "val", std::nullopt, EvalOptions{{32, 8}});
  const auto back = EvalReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json().dump(), r.to_json().dump());
  EXPECT_EQ(back.frozen_threshold().value, r.threshold);
}
