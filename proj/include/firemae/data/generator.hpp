#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "firemae/core/rng.hpp"
#include "firemae/data/scene.hpp"

namespace firemae::data {

/// Synthetic single-band MWIR scene model. Amplitudes are in DN; fire and
/// confuser amplitudes are multiples of the sensor noise sigma.
struct GeneratorConfig {
  std::size_t height = 896;
  std::size_t width = 896;

  double background_dn = 1000.0;
  double terrain_amplitude = 40.0;  // low-frequency relief
  double texture_amplitude = 12.0;  // mid-frequency relief
  double noise_sigma = 6.0;
  double stripe_amplitude = 4.0;    // across-track (per-column) offsets
  std::size_t stripe_period = 16;   // detector pattern repeat, in columns

  double invalid_fraction = 0.21;
  double invalid_scale = 160.0;  // correlation length of no-data blobs, px

  double prevalence = 2e-4;     // expected labeled fraction of valid pixels
  long fire_events = -1;        // >= 0 overrides the prevalence-derived count
  std::size_t min_events = 1;   // floor on the derived event count
  double mean_complexes = 1.5;  // fire complexes per scene (1 + Poisson)
  double cluster_sigma = 20.0;  // event scatter around a complex centre, px
  double large_event_prob = 0.12;
  std::size_t large_event_max = 30;

  double hard_fraction = 0.3;   // events rendered at or near the noise floor
  double hard_snr_lo = 0.7, hard_snr_hi = 2.0;
  double bright_snr_lo = 3.0, bright_snr_hi = 40.0;
  double psf_spill = 0.15;      // fraction leaking into 4-neighbours

  double confusers_per_mpix = 10.0;
  double confuser_snr_lo = 3.0, confuser_snr_hi = 20.0;
  double confuser_sigma_lo = 1.5, confuser_sigma_hi = 3.5;

  std::int64_t base_timestamp = 1'700'000'000;

  /// Mean event footprint in pixels under the size distribution below.
  double mean_event_size() const {
    const double small = 0.4 * 1 + 0.3 * 2 + 0.18 * 3 + 0.12 * 4;
    const double large = 0.5 * (5.0 + static_cast<double>(large_event_max));
    return (1.0 - large_event_prob) * small + large_event_prob * large;
  }

  void validate() const {
    if (height < 8 || width < 8) throw ConfigError("generator: scene must be at least 8x8");
    if (!(invalid_fraction >= 0.0 && invalid_fraction < 1.0)) throw ConfigError("generator: invalid_fraction must be in [0, 1)");
    if (!(prevalence >= 0.0 && prevalence < 1.0)) throw ConfigError("generator: prevalence must be in [0, 1)");
    if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) throw ConfigError("generator: hard_fraction must be in [0, 1]");
    if (large_event_max < 5) throw ConfigError("generator: large_event_max must be >= 5");
    const double valid_px = (1.0 - invalid_fraction) * static_cast<double>(height * width);
    const double expected_fire_px =
        fire_events >= 0 ? static_cast<double>(fire_events) * mean_event_size() : prevalence * valid_px;
    if (expected_fire_px > 0.25 * valid_px)
      throw ConfigError("generator: requested fire pixels exceed a quarter of the valid scene area");
  }
};

namespace detail {

/// Smooth zero-mean, unit-variance-ish field: a coarse normal grid with
/// spacing `scale` px, bilinearly interpolated.
inline std::vector<double> smooth_field(std::size_t h, std::size_t w, double scale, Rng& rng) {
  const std::size_t gh = static_cast<std::size_t>(std::ceil(static_cast<double>(h) / scale)) + 2;
  const std::size_t gw = static_cast<std::size_t>(std::ceil(static_cast<double>(w) / scale)) + 2;
  std::vector<double> grid(gh * gw);
  for (auto& g : grid) g = rng.normal();
  std::vector<double> out(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const double fy = static_cast<double>(r) / scale;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < w; ++c) {
      const double fx = static_cast<double>(c) / scale;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = fx - static_cast<double>(x0);
      const double a = grid[y0 * gw + x0], b = grid[y0 * gw + x0 + 1];
      const double cc = grid[(y0 + 1) * gw + x0], d = grid[(y0 + 1) * gw + x0 + 1];
      // smoothstep weights hide the grid lines
      const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
      out[r * w + c] = (a * (1 - sx) + b * sx) * (1 - sy) + (cc * (1 - sx) + d * sx) * sy;
    }
  }
  return out;
}

inline std::size_t draw_event_size(const GeneratorConfig& cfg, Rng& rng) {
  if (rng.bernoulli(cfg.large_event_prob)) return 5 + static_cast<std::size_t>(rng.below(cfg.large_event_max - 4));
  const double u = rng.uniform();
  if (u < 0.4) return 1;
  if (u < 0.7) return 2;
  if (u < 0.88) return 3;
  return 4;
}

}  // namespace detail

/// Deterministic scene for (seed, cfg).
inline SceneContainer gen_synthetic_scene(std::uint64_t seed, const GeneratorConfig& cfg = {}) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width, n = h * w;
  SceneContainer s;
  s.scene_id = "syn-" + hex64(seed).substr(8);
  s.height = h;
  s.width = w;
  s.raster.assign(n, 0.0f);
  s.valid_mask.assign(n, 1);
  s.label_mask.assign(n, 0);

  Rng bg = Rng::derive(seed, 1), inv = Rng::derive(seed, 2), fire = Rng::derive(seed, 3), conf = Rng::derive(seed, 4),
      noise = Rng::derive(seed, 5);
  s.timestamp = cfg.base_timestamp + static_cast<std::int64_t>(Rng::derive(seed, 6).below(86'400 * 365));

  // Background: relief at two scales plus column striping.
  std::vector<double> field(n, cfg.background_dn);
  const auto terrain = detail::smooth_field(h, w, 96.0, bg);
  const auto texture = detail::smooth_field(h, w, 12.0, bg);
  std::vector<double> pattern(std::max<std::size_t>(cfg.stripe_period, 1));
  for (auto& p : pattern) p = bg.normal();
  std::vector<double> column(w);
  for (std::size_t c = 0; c < w; ++c) column[c] = cfg.stripe_amplitude * (pattern[c % pattern.size()] + 0.3 * bg.normal());
  for (std::size_t i = 0; i < n; ++i)
    field[i] += cfg.terrain_amplitude * terrain[i] + cfg.texture_amplitude * texture[i] + column[i % w];

  // No-data blobs: threshold a smooth field at its invalid-fraction quantile.
  const auto k_invalid = static_cast<std::size_t>(std::llround(cfg.invalid_fraction * static_cast<double>(n)));
  if (k_invalid > 0) {
    const double jitter = std::clamp(cfg.invalid_fraction * (1.0 + 0.2 * inv.normal()), 0.0, 0.95);
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(jitter * static_cast<double>(n))), 1, n - 1);
    auto blob = detail::smooth_field(h, w, cfg.invalid_scale, inv);
    auto sorted = blob;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(), std::greater<>());
    const double thr = sorted[k - 1];
    for (std::size_t i = 0; i < n; ++i)
      if (blob[i] >= thr) s.valid_mask[i] = 0;
  }
  std::size_t valid_count = 0;
  for (auto v : s.valid_mask) valid_count += v;

  // Fires: events clustered around a few complexes, grown as compact blobs.
  std::size_t events = 0;
  if (cfg.fire_events >= 0) {
    events = static_cast<std::size_t>(cfg.fire_events);
  } else if (cfg.prevalence > 0.0 && valid_count > 0) {
    const double lambda = cfg.prevalence * static_cast<double>(valid_count) / cfg.mean_event_size();
    events = std::max<std::size_t>(cfg.min_events, fire.poisson(lambda));
  }
  std::vector<double> hot(n, 0.0);
  if (events > 0 && valid_count > 0) {
    const std::size_t complexes = 1 + fire.poisson(cfg.mean_complexes - 1.0);
    std::vector<std::pair<double, double>> centres;
    while (centres.size() < complexes) {
      const std::size_t i = fire.below(n);
      if (s.valid_mask[i]) centres.emplace_back(static_cast<double>(i / w), static_cast<double>(i % w));
    }
    static constexpr int dr[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
    static constexpr int dc[8] = {0, 0, -1, 1, -1, 1, -1, 1};
    for (std::size_t e = 0; e < events; ++e) {
      std::size_t seed_px = n;
      for (int attempt = 0; attempt < 64 && seed_px == n; ++attempt) {
        const auto& cen = centres[fire.below(centres.size())];
        const double r = std::round(cen.first + cfg.cluster_sigma * fire.normal());
        const double c = std::round(cen.second + cfg.cluster_sigma * fire.normal());
        if (r < 0 || c < 0 || r >= static_cast<double>(h) || c >= static_cast<double>(w)) continue;
        const auto i = static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
        if (s.valid_mask[i]) seed_px = i;
      }
      if (seed_px == n) continue;
      const std::size_t size = detail::draw_event_size(cfg, fire);
      const bool hard = fire.bernoulli(cfg.hard_fraction);
      const double snr = hard ? fire.uniform(cfg.hard_snr_lo, cfg.hard_snr_hi)
                              : std::exp(fire.uniform(std::log(cfg.bright_snr_lo), std::log(cfg.bright_snr_hi)));
      std::vector<std::size_t> blob{seed_px};
      for (int guard = 0; blob.size() < size && guard < 64 * static_cast<int>(size); ++guard) {
        const std::size_t from = blob[fire.below(blob.size())];
        const int k = static_cast<int>(fire.below(8));
        const long r = static_cast<long>(from / w) + dr[k], c = static_cast<long>(from % w) + dc[k];
        if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) continue;
        const std::size_t i = static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
        if (std::find(blob.begin(), blob.end(), i) == blob.end()) blob.push_back(i);
      }
      for (std::size_t i : blob) {
        // sub-pixel fill factor: the burning area rarely covers a whole pixel
        const double a = cfg.noise_sigma * snr * fire.uniform(0.35, 1.0);
        hot[i] += a;
        s.label_mask[i] = 1;
        const std::size_t r = i / w, c = i % w;
        if (r > 0) hot[i - w] += cfg.psf_spill * a;
        if (r + 1 < h) hot[i + w] += cfg.psf_spill * a;
        if (c > 0) hot[i - 1] += cfg.psf_spill * a;
        if (c + 1 < w) hot[i + 1] += cfg.psf_spill * a;
      }
    }
  }

  // Confusers: broad, smooth, unlabeled warm spots (glint-like).
  const std::size_t n_conf = conf.poisson(cfg.confusers_per_mpix * static_cast<double>(n) / 1e6);
  for (std::size_t k = 0; k < n_conf; ++k) {
    const double r0 = conf.uniform(0.0, static_cast<double>(h)), c0 = conf.uniform(0.0, static_cast<double>(w));
    const double sig = conf.uniform(cfg.confuser_sigma_lo, cfg.confuser_sigma_hi);
    const double amp = cfg.noise_sigma * conf.uniform(cfg.confuser_snr_lo, cfg.confuser_snr_hi);
    const long rad = static_cast<long>(std::ceil(3.0 * sig));
    for (long r = static_cast<long>(r0) - rad; r <= static_cast<long>(r0) + rad; ++r) {
      if (r < 0 || r >= static_cast<long>(h)) continue;
      for (long c = static_cast<long>(c0) - rad; c <= static_cast<long>(c0) + rad; ++c) {
        if (c < 0 || c >= static_cast<long>(w)) continue;
        const double d2 = (static_cast<double>(r) + 0.5 - r0) * (static_cast<double>(r) + 0.5 - r0) +
                          (static_cast<double>(c) + 0.5 - c0) * (static_cast<double>(c) + 0.5 - c0);
        hot[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] += amp * std::exp(-0.5 * d2 / (sig * sig));
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!s.valid_mask[i]) continue;
    s.raster[i] = static_cast<float>(field[i] + hot[i] + cfg.noise_sigma * noise.normal());
  }

  s.meta["generator_seed"] = seed;
  s.meta["confusers"] = n_conf;
  s.meta["fire_events"] = events;
  return s;
}

}  // namespace firemae::data
