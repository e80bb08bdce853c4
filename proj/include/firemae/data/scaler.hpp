#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "firemae/data/scene.hpp"

namespace firemae::data {

/// Linear-interpolated quantile of `v` at q in [0, 1]; reorders `v`.
inline double quantile_inplace(std::vector<double>& v, double q) {
  if (v.empty()) throw ConfigError("quantile of an empty sample");
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo + 1), v.end());
  return a + frac * (b - a);
}

/// Per-scene median/IQR standardization fitted on valid pixels only.
struct RobustScaler {
  double median = 0.0;
  double iqr = 1.0;
  double clip_lo = -20.0;
  double clip_hi = 20.0;
  static constexpr double eps = 1e-6;

  static RobustScaler fit(const SceneContainer& scene, double clip = 20.0) {
    scene.check();
    std::vector<double> vals;
    vals.reserve(scene.pixels());
    for (std::size_t i = 0; i < scene.pixels(); ++i)
      if (scene.valid_mask[i]) vals.push_back(scene.raster[i]);
    if (vals.size() < 2)
      throw ConfigError("fit_robust_scaler: scene '" + scene.scene_id + "' has " + std::to_string(vals.size()) +
                        " valid pixels, need at least 2");
    RobustScaler s;
    s.clip_lo = -clip;
    s.clip_hi = clip;
    s.median = quantile_inplace(vals, 0.5);
    const double q75 = quantile_inplace(vals, 0.75);
    const double q25 = quantile_inplace(vals, 0.25);
    s.iqr = q75 - q25;
    return s;
  }

  float scale(double x) const {
    const double denom = std::max(iqr, eps);
    return static_cast<float>(std::clamp((x - median) / denom, clip_lo, clip_hi));
  }

  /// Normalized raster; invalid pixels are 0.
  std::vector<float> apply(const SceneContainer& scene) const {
    std::vector<float> out(scene.pixels(), 0.0f);
    for (std::size_t i = 0; i < scene.pixels(); ++i)
      if (scene.valid_mask[i]) out[i] = scale(scene.raster[i]);
    return out;
  }
};

inline RobustScaler fit_robust_scaler(const SceneContainer& scene) { return RobustScaler::fit(scene); }

}  // namespace firemae::data
