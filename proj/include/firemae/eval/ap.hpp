#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "firemae/core/error.hpp"

namespace firemae::eval {

/// AP value; `defined` is false (and value NaN) when the stream has no positives.
struct APResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

struct PRPoint {
  double threshold;  // scores >= threshold are predicted positive
  double recall;
  double precision;
};

namespace detail {

/// Step-wise AP over tie groups visited in descending score order:
/// sum of (R_k - R_{k-1}) * P_k. `groups` yields (positives, negatives) per group.
template <typename Groups>
APResult step_ap(const Groups& groups, std::uint64_t total_pos, std::uint64_t total_neg) {
  APResult r;
  r.positives = total_pos;
  r.negatives = total_neg;
  if (total_pos == 0) return r;
  double ap = 0;
  std::uint64_t tp = 0, fp = 0;
  for (const auto& [p, n] : groups) {
    if (p == 0 && n == 0) continue;
    tp += p;
    fp += n;
    if (p > 0) ap += static_cast<double>(p) / static_cast<double>(total_pos) * static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  r.value = ap;
  r.defined = true;
  return r;
}

}  // namespace detail

/// Exact AP by sorting (score, label) pairs; equal scores form one PR point.
inline APResult exact_ap(std::vector<std::pair<float, std::uint8_t>> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::pair<std::uint64_t, std::uint64_t>> groups;
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, n = 0;
    for (; j < pairs.size() && pairs[j].first == pairs[i].first; ++j) (pairs[j].second ? p : n) += 1;
    groups.emplace_back(p, n);
    pos += p;
    neg += n;
    i = j;
  }
  return detail::step_ap(groups, pos, neg);
}

/// Streaming AP over scores in [0, 1] with a fixed uniform histogram. Bins are
/// swept from the top; each bin is one PR point. Optionally keeps every pair
/// for the exact estimator.
class APAccumulator {
 public:
  explicit APAccumulator(std::size_t bins = 4096, bool keep_exact = false)
      : pos_(bins, 0), neg_(bins, 0), keep_exact_(keep_exact) {
    if (bins == 0) throw ConfigError("APAccumulator: need at least one bin");
  }

  std::size_t bin_of(double score) const {
    if (!(score > 0.0)) return 0;  // also maps NaN to the lowest bin
    if (score >= 1.0) return pos_.size() - 1;
    return std::min(static_cast<std::size_t>(score * static_cast<double>(pos_.size())), pos_.size() - 1);
  }

  void add(float score, bool label) {
    (label ? pos_ : neg_)[bin_of(score)] += 1;
    if (keep_exact_) exact_.emplace_back(score, static_cast<std::uint8_t>(label));
  }

  /// Adds every valid pixel of a scene.
  void add_masked(const float* scores, const std::uint8_t* labels, const std::uint8_t* valid, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      if (valid[i]) add(scores[i], labels[i] != 0);
  }

  void merge(const APAccumulator& o) {
    if (o.pos_.size() != pos_.size()) throw ConfigError("APAccumulator::merge: bin counts differ");
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      pos_[i] += o.pos_[i];
      neg_[i] += o.neg_[i];
    }
    if (keep_exact_) exact_.insert(exact_.end(), o.exact_.begin(), o.exact_.end());
  }

  APResult binned() const {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> groups;
    groups.reserve(pos_.size());
    std::uint64_t p = 0, n = 0;
    for (std::size_t i = pos_.size(); i-- > 0;) {
      groups.emplace_back(pos_[i], neg_[i]);
      p += pos_[i];
      n += neg_[i];
    }
    return detail::step_ap(groups, p, n);
  }

  APResult exact() const {
    if (!keep_exact_) throw StateError("APAccumulator: exact mode was not enabled");
    return exact_ap(exact_);
  }

  /// PR points at every non-empty bin's lower edge, descending threshold.
  std::vector<PRPoint> pr_curve() const {
    std::uint64_t total = 0;
    for (auto c : pos_) total += c;
    std::vector<PRPoint> out;
    std::uint64_t tp = 0, fp = 0;
    for (std::size_t i = pos_.size(); i-- > 0;) {
      if (pos_[i] == 0 && neg_[i] == 0) continue;
      tp += pos_[i];
      fp += neg_[i];
      out.push_back({static_cast<double>(i) / static_cast<double>(pos_.size()),
                     total ? static_cast<double>(tp) / static_cast<double>(total) : 0.0,
                     static_cast<double>(tp) / static_cast<double>(tp + fp)});
    }
    return out;
  }

  const std::vector<std::uint64_t>& positive_counts() const noexcept { return pos_; }
  const std::vector<std::uint64_t>& negative_counts() const noexcept { return neg_; }
  std::size_t bins() const noexcept { return pos_.size(); }

 private:
  std::vector<std::uint64_t> pos_, neg_;
  bool keep_exact_;
  std::vector<std::pair<float, std::uint8_t>> exact_;
};

}  // namespace firemae::eval
