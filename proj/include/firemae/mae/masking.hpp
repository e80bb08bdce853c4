#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "firemae/core/error.hpp"
#include "firemae/core/rng.hpp"

namespace firemae::mae {

/// Grid-aligned block mask (1 = masked) at full and half resolution.
struct MaskPlan {
  std::size_t height = 0, width = 0, block = 1;
  double ratio = 0.0;
  std::size_t masked_blocks = 0;
  std::vector<std::uint8_t> full;  // height x width
  std::vector<std::uint8_t> half;  // height/2 x width/2, full(2i, 2j)

  std::size_t masked_pixels() const { return static_cast<std::size_t>(std::accumulate(full.begin(), full.end(), std::size_t{0})); }
};

/// Selects exactly round(r * blocks) aligned b x b blocks uniformly without
/// replacement, keeping at least one block visible.
inline MaskPlan make_mask_plan(std::size_t h, std::size_t w, double r, std::size_t b, std::uint64_t seed) {
  if (!(r > 0.0 && r < 1.0)) throw ConfigError("make_mask_plan: ratio must be in (0, 1), got " + std::to_string(r));
  if (b == 0 || h % b != 0 || w % b != 0)
    throw ConfigError("make_mask_plan: block " + std::to_string(b) + " does not divide " + std::to_string(h) + "x" + std::to_string(w));
  if (h % 2 != 0 || w % 2 != 0) throw ConfigError("make_mask_plan: extents must be even");
  const std::size_t gh = h / b, gw = w / b, nb = gh * gw;
  std::size_t k = static_cast<std::size_t>(std::llround(r * static_cast<double>(nb)));
  if (k >= nb) k = nb - 1;

  // partial Fisher-Yates over block ids
  Rng rng = Rng::derive(seed, 0x3a5c);
  std::vector<std::size_t> ids(nb);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.below(nb - i)]);

  MaskPlan p;
  p.height = h;
  p.width = w;
  p.block = b;
  p.ratio = r;
  p.masked_blocks = k;
  p.full.assign(h * w, 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t br = ids[i] / gw, bc = ids[i] % gw;
    for (std::size_t y = br * b; y < (br + 1) * b; ++y)
      for (std::size_t x = bc * b; x < (bc + 1) * b; ++x) p.full[y * w + x] = 1;
  }
  p.half.resize((h / 2) * (w / 2));
  for (std::size_t y = 0; y < h / 2; ++y)
    for (std::size_t x = 0; x < w / 2; ++x) p.half[y * (w / 2) + x] = p.full[(2 * y) * w + 2 * x];
  return p;
}

}  // namespace firemae::mae
