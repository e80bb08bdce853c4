#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "firemae/core/rng.hpp"
#include "firemae/data/scaler.hpp"
#include "firemae/data/scene.hpp"

namespace firemae::data {

struct TilingConfig {
  std::size_t tile = 224;
  std::size_t overlap = 16;
};

/// Square window cut from a normalized scene.
struct Tile {
  std::string scene_id;
  std::size_t scene_index = 0;  // position in the owning scene list, for stitching
  std::size_t row = 0, col = 0;
  std::size_t size = 0;
  std::vector<float> patch;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> label;
  bool has_fire = false;

  std::size_t pixels() const noexcept { return size * size; }

  void refresh_has_fire() {
    has_fire = false;
    for (std::size_t i = 0; i < label.size(); ++i)
      if (label[i] && valid[i]) {
        has_fire = true;
        return;
      }
  }
};

/// Window origins along one axis: stride tile-overlap, last window anchored
/// to end at the boundary.
inline std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t tile, std::size_t overlap) {
  if (tile == 0 || overlap >= tile) throw ConfigError("tiling: need tile > overlap >= 0");
  if (extent < tile)
    throw ShapeError("tile_scene", "scene extent " + std::to_string(extent) + " is smaller than the tile size " + std::to_string(tile));
  const std::size_t stride = tile - overlap;
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + tile <= extent; o += stride) out.push_back(o);
  if (out.back() + tile < extent) out.push_back(extent - tile);
  return out;
}

/// Cuts `normalized` (the scaler output for `scene`) into overlapping tiles in
/// row-major origin order.
inline std::vector<Tile> tile_scene(const SceneContainer& scene, const std::vector<float>& normalized, const TilingConfig& cfg = {},
                                    std::size_t scene_index = 0) {
  scene.check();
  if (normalized.size() != scene.pixels()) throw ShapeError("tile_scene", "normalized raster does not match the scene");
  const auto rows = tile_origins(scene.height, cfg.tile, cfg.overlap);
  const auto cols = tile_origins(scene.width, cfg.tile, cfg.overlap);
  const std::size_t t = cfg.tile;
  std::vector<Tile> out;
  out.reserve(rows.size() * cols.size());
  for (std::size_t r0 : rows)
    for (std::size_t c0 : cols) {
      Tile tl;
      tl.scene_id = scene.scene_id;
      tl.scene_index = scene_index;
      tl.row = r0;
      tl.col = c0;
      tl.size = t;
      tl.patch.resize(t * t);
      tl.valid.resize(t * t);
      tl.label.resize(t * t);
      for (std::size_t r = 0; r < t; ++r) {
        const std::size_t src = (r0 + r) * scene.width + c0;
        std::copy_n(normalized.begin() + static_cast<std::ptrdiff_t>(src), t, tl.patch.begin() + static_cast<std::ptrdiff_t>(r * t));
        std::copy_n(scene.valid_mask.begin() + static_cast<std::ptrdiff_t>(src), t, tl.valid.begin() + static_cast<std::ptrdiff_t>(r * t));
        std::copy_n(scene.label_mask.begin() + static_cast<std::ptrdiff_t>(src), t, tl.label.begin() + static_cast<std::ptrdiff_t>(r * t));
      }
      tl.refresh_has_fire();
      out.push_back(std::move(tl));
    }
  return out;
}

/// Fits the robust scaler and tiles in one go.
inline std::vector<Tile> prepare_tiles(const SceneContainer& scene, const TilingConfig& cfg = {}, std::size_t scene_index = 0) {
  return tile_scene(scene, RobustScaler::fit(scene).apply(scene), cfg, scene_index);
}

/// Tiles every scene of a split; tile.scene_index is the position in `scenes`.
inline std::vector<Tile> tile_scenes(const std::vector<SceneContainer>& scenes, const TilingConfig& cfg = {}) {
  std::vector<Tile> out;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    for (auto& t : prepare_tiles(scenes[i], cfg, i)) out.push_back(std::move(t));
  return out;
}

/// Source index for destination (r, c) under dihedral element `e` on an
/// n x n grid. e & 3 counts quarter turns, e & 4 adds a horizontal flip
/// applied before the rotation.
inline std::size_t dihedral_source(unsigned e, std::size_t n, std::size_t r, std::size_t c) {
  // invert the rotation first, then the flip
  std::size_t sr = r, sc = c;
  for (unsigned k = 0; k < (e & 3u); ++k) {
    // inverse of a counter-clockwise quarter turn
    const std::size_t nr = sc, nc = n - 1 - sr;
    sr = nr;
    sc = nc;
  }
  if (e & 4u) sc = n - 1 - sc;
  return sr * n + sc;
}

template <typename V>
V apply_dihedral(const V& src, unsigned e, std::size_t n) {
  V out(src.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = src[dihedral_source(e, n, r, c)];
  return out;
}

/// Applies group element e in [0, 8) to patch, valid and label together.
inline Tile transform_tile(const Tile& t, unsigned e) {
  if (e >= 8) throw ConfigError("dihedral element must be in [0, 8)");
  Tile out = t;
  out.patch = apply_dihedral(t.patch, e, t.size);
  out.valid = apply_dihedral(t.valid, e, t.size);
  out.label = apply_dihedral(t.label, e, t.size);
  return out;
}

/// Random flip/rotation drawn from `seed`.
inline Tile augment(const Tile& t, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0xa06);
  return transform_tile(t, static_cast<unsigned>(rng.below(8)));
}

}  // namespace firemae::data
