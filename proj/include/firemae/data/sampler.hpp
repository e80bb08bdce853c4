#pragma once

#include <cstdint>
#include <vector>

#include "firemae/core/error.hpp"
#include "firemae/core/rng.hpp"
#include "firemae/data/tiling.hpp"

namespace firemae::data {

/// Positive-biased batch sampler over a tile pool. Each slot is drawn, with
/// replacement, from the positive tiles with probability p_pos and from the
/// negatives otherwise. Returns indices into the pool.
class BatchSampler {
 public:
  BatchSampler(const std::vector<Tile>& pool, double p_pos, std::uint64_t seed) : p_pos_(p_pos), rng_(seed) {
    if (!(p_pos >= 0.0 && p_pos <= 1.0)) throw ConfigError("sample_batch: p_pos must be in [0, 1]");
    for (std::size_t i = 0; i < pool.size(); ++i) (pool[i].has_fire ? pos_ : neg_).push_back(i);
    if (p_pos > 0.0 && pos_.empty()) throw ConfigError("sample_batch: p_pos > 0 but the pool has no positive tiles");
    if (p_pos < 1.0 && neg_.empty()) throw ConfigError("sample_batch: p_pos < 1 but the pool has no negative tiles");
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out(batch);
    for (auto& slot : out) {
      const bool positive = p_pos_ >= 1.0 || (p_pos_ > 0.0 && rng_.bernoulli(p_pos_));
      const auto& src = positive ? pos_ : neg_;
      slot = src[rng_.below(src.size())];
    }
    return out;
  }

  Rng& rng() noexcept { return rng_; }
  std::size_t positives() const noexcept { return pos_.size(); }
  std::size_t negatives() const noexcept { return neg_.size(); }

 private:
  double p_pos_;
  Rng rng_;
  std::vector<std::size_t> pos_, neg_;
};

inline std::vector<Tile> sample_batch(const std::vector<Tile>& pool, std::size_t batch, double p_pos, std::uint64_t seed) {
  BatchSampler s(pool, p_pos, seed);
  std::vector<Tile> out;
  for (std::size_t i : s.next(batch)) out.push_back(pool[i]);
  return out;
}

}  // namespace firemae::data
