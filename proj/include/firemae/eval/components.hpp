#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

namespace firemae::eval {

struct FireEvent {
  std::size_t id = 0;
  std::vector<std::size_t> pixels;  // row-major indices, ascending
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // inclusive bounding box
  std::size_t size() const noexcept { return pixels.size(); }
};

/// Per-pixel component ids (0 = background, components numbered from 1).
struct Labeling {
  std::size_t height = 0, width = 0;
  std::vector<std::uint32_t> labels;
  std::size_t count = 0;
};

namespace detail {

struct UnionFind {
  std::vector<std::uint32_t> parent;
  std::uint32_t make() {
    parent.push_back(static_cast<std::uint32_t>(parent.size()));
    return parent.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // keep the smaller root so ids follow raster order of first pixels
    if (a < b) parent[b] = a;
    else parent[a] = b;
  }
};

}  // namespace detail

/// Two-pass union-find labeling of (mask AND valid) under 8-connectivity.
/// Component ids follow raster order of each component's first pixel.
inline Labeling label_components(const std::uint8_t* mask, const std::uint8_t* valid, std::size_t h, std::size_t w) {
  Labeling out{h, w, std::vector<std::uint32_t>(h * w, 0), 0};
  detail::UnionFind uf;
  uf.make();  // slot 0 is background
  auto on = [&](std::size_t i) { return mask[i] && (!valid || valid[i]); };
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      if (!on(i)) continue;
      std::uint32_t best = 0;
      auto look = [&](std::size_t j) {
        const std::uint32_t l = out.labels[j];
        if (l == 0) return;
        if (best == 0) best = l;
        else uf.unite(best, l);
      };
      // already-visited neighbours: W, NW, N, NE
      if (c > 0) look(i - 1);
      if (r > 0) {
        if (c > 0) look(i - w - 1);
        look(i - w);
        if (c + 1 < w) look(i - w + 1);
      }
      out.labels[i] = best ? best : uf.make();
    }
  // provisional labels are created in raster order, so roots do too; compact
  std::vector<std::uint32_t> remap(uf.parent.size(), 0);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!out.labels[i]) continue;
    const std::uint32_t root = uf.find(out.labels[i]);
    if (!remap[root]) remap[root] = static_cast<std::uint32_t>(++out.count);
    out.labels[i] = remap[root];
  }
  return out;
}

inline std::vector<FireEvent> connected_components(const std::uint8_t* mask, const std::uint8_t* valid, std::size_t h, std::size_t w) {
  const Labeling lab = label_components(mask, valid, h, w);
  std::vector<FireEvent> events(lab.count);
  for (std::size_t k = 0; k < lab.count; ++k) events[k].id = k + 1;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (!lab.labels[i]) continue;
    FireEvent& e = events[lab.labels[i] - 1];
    const std::size_t r = i / w, c = i % w;
    if (e.pixels.empty()) {
      e.row0 = e.row1 = r;
      e.col0 = e.col1 = c;
    }
    e.row0 = std::min(e.row0, r);
    e.row1 = std::max(e.row1, r);
    e.col0 = std::min(e.col0, c);
    e.col1 = std::max(e.col1, c);
    e.pixels.push_back(i);
  }
  return events;
}

inline std::vector<FireEvent> connected_components(const std::vector<std::uint8_t>& mask, const std::vector<std::uint8_t>& valid,
                                                   std::size_t h, std::size_t w) {
  return connected_components(mask.data(), valid.empty() ? nullptr : valid.data(), h, w);
}

}  // namespace firemae::eval
