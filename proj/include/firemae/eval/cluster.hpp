#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "firemae/core/rng.hpp"
#include "firemae/eval/components.hpp"

namespace firemae::eval {

/// Point detection in planar metres with a timestamp in seconds.
struct Detection {
  double x = 0, y = 0;
  std::int64_t t = 0;
};

struct Cluster {
  std::vector<std::size_t> members;  // indices into the source detection list
};

struct MatchCounts {
  std::size_t joint = 0;
  std::size_t a_only = 0;
  std::size_t b_only = 0;
};

/// Merges detections whose radius-r buffers overlap (centres within 2r).
/// Clusters are ordered by their first member.
inline std::vector<Cluster> buffer_clusters(const std::vector<Detection>& d, double radius) {
  detail::UnionFind uf;
  for (std::size_t i = 0; i < d.size(); ++i) uf.make();
  const double reach = 2 * radius;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j)
      if (std::hypot(d[i].x - d[j].x, d[i].y - d[j].y) <= reach) uf.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  std::vector<Cluster> out;
  std::vector<std::size_t> slot(d.size(), SIZE_MAX);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t root = uf.find(static_cast<std::uint32_t>(i));
    if (slot[root] == SIZE_MAX) {
      slot[root] = out.size();
      out.emplace_back();
    }
    out[slot[root]].members.push_back(i);
  }
  return out;
}

/// Event-level agreement between two detection sources. Clusters from A and
/// B are linked when some member pair lies within 2r and within the time
/// window; each connected group of linked clusters containing both sources
/// counts once as joint, unlinked clusters count as one-sided.
inline MatchCounts cluster_match(const std::vector<Detection>& a, const std::vector<Detection>& b, double radius = 800.0,
                                 std::int64_t window = 600) {
  const auto ca = buffer_clusters(a, radius);
  const auto cb = buffer_clusters(b, radius);
  const double reach = 2 * radius;
  detail::UnionFind uf;
  for (std::size_t i = 0; i < ca.size() + cb.size(); ++i) uf.make();
  for (std::size_t i = 0; i < ca.size(); ++i)
    for (std::size_t j = 0; j < cb.size(); ++j) {
      bool linked = false;
      for (std::size_t p : ca[i].members) {
        for (std::size_t q : cb[j].members) {
          const auto dt = a[p].t - b[q].t;
          if ((dt < 0 ? -dt : dt) <= window && std::hypot(a[p].x - b[q].x, a[p].y - b[q].y) <= reach) {
            linked = true;
            break;
          }
        }
        if (linked) break;
      }
      if (linked) uf.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(ca.size() + j));
    }
  std::vector<std::uint8_t> has_a(ca.size() + cb.size(), 0), has_b(ca.size() + cb.size(), 0);
  for (std::size_t i = 0; i < ca.size(); ++i) has_a[uf.find(static_cast<std::uint32_t>(i))] = 1;
  for (std::size_t j = 0; j < cb.size(); ++j) has_b[uf.find(static_cast<std::uint32_t>(ca.size() + j))] = 1;
  MatchCounts m;
  for (std::size_t r = 0; r < has_a.size(); ++r) {
    if (uf.find(static_cast<std::uint32_t>(r)) != r) continue;
    if (has_a[r] && has_b[r]) ++m.joint;
    else if (has_a[r]) ++m.a_only;
    else if (has_b[r]) ++m.b_only;
  }
  return m;
}

struct MatchScenario {
  std::vector<Detection> a, b;
};

/// Places `joint` clusters seen by both sources, `b_only` seen only by B and
/// `a_only` seen only by A on a shuffled grid of sites `spacing` metres apart.
/// Each site holds 1-4 detections per source within radius/2 of its centre;
/// joint sites keep both sources within window/2 of a shared time.
inline MatchScenario build_match_scenario(std::size_t joint, std::size_t b_only, std::size_t a_only, std::uint64_t seed,
                                          double radius = 800.0, std::int64_t window = 600, double spacing = 20000.0) {
  Rng rng = Rng::derive(seed, 0xc1a5);
  const std::size_t n = joint + b_only + a_only;
  std::vector<std::uint8_t> kind(n);  // 0 joint, 1 B only, 2 A only
  for (std::size_t i = 0; i < n; ++i) kind[i] = i < joint ? 0 : (i < joint + b_only ? 1 : 2);
  for (std::size_t i = n; i > 1; --i) std::swap(kind[i - 1], kind[rng.below(i)]);
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  MatchScenario sc;
  auto scatter = [&](std::vector<Detection>& out, double cx, double cy, std::int64_t t0) {
    const std::size_t k = 1 + rng.below(4);
    for (std::size_t i = 0; i < k; ++i) {
      const double ang = rng.uniform(0.0, 6.283185307179586), rad = rng.uniform(0.0, radius / 2);
      const auto dt = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(window / 2) + 1)) - window / 4;
      out.push_back({cx + rad * std::cos(ang), cy + rad * std::sin(ang), t0 + dt});
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = static_cast<double>(i % side) * spacing, cy = static_cast<double>(i / side) * spacing;
    const auto t0 = static_cast<std::int64_t>(1'700'000'000 + rng.below(86400));
    if (kind[i] != 1) scatter(sc.a, cx, cy, t0);
    if (kind[i] != 2) scatter(sc.b, cx, cy, t0);
  }
  return sc;
}

}  // namespace firemae::eval
