#pragma once

#include <cstdint>
#include <vector>

#include "firemae/core/error.hpp"
#include "firemae/eval/components.hpp"

namespace firemae::eval {

/// Event counts, poolable across scenes.
struct EventCounts {
  std::uint64_t gt_events = 0;
  std::uint64_t gt_detected = 0;
  std::uint64_t pred_events = 0;
  std::uint64_t pred_true = 0;

  EventCounts& operator+=(const EventCounts& o) {
    gt_events += o.gt_events;
    gt_detected += o.gt_detected;
    pred_events += o.pred_events;
    pred_true += o.pred_true;
    return *this;
  }
};

struct FireF1 {
  double precision = 0, recall = 0, f1 = 0;
  bool precision_defined = false;  // false when nothing was predicted
  bool recall_defined = false;     // false when there are no ground-truth events
  EventCounts counts;
};

inline FireF1 fire_f1_from_counts(const EventCounts& c) {
  FireF1 r;
  r.counts = c;
  r.recall_defined = c.gt_events > 0;
  r.precision_defined = c.pred_events > 0;
  if (r.recall_defined) r.recall = static_cast<double>(c.gt_detected) / static_cast<double>(c.gt_events);
  if (r.precision_defined) r.precision = static_cast<double>(c.pred_true) / static_cast<double>(c.pred_events);
  if (r.recall_defined && r.precision_defined && r.precision + r.recall > 0)
    r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

namespace detail {

/// Predicted components on valid pixels with prob >= t; counts those touching
/// any ground-truth pixel.
inline void count_predictions(const float* probs, const std::uint8_t* valid, const Labeling& gt, double t, EventCounts& c) {
  const std::size_t n = gt.height * gt.width;
  std::vector<std::uint8_t> pred(n);
  for (std::size_t i = 0; i < n; ++i) pred[i] = valid[i] && static_cast<double>(probs[i]) >= t;
  const Labeling lab = label_components(pred.data(), valid, gt.height, gt.width);
  std::vector<std::uint8_t> hit(lab.count + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (lab.labels[i] && gt.labels[i]) hit[lab.labels[i]] = 1;
  c.pred_events += lab.count;
  for (std::size_t k = 1; k <= lab.count; ++k) c.pred_true += hit[k];
}

/// Highest probability inside each ground-truth event (index = id - 1).
inline std::vector<float> event_max(const float* probs, const Labeling& gt) {
  std::vector<float> mx(gt.count, -1.0f);
  for (std::size_t i = 0; i < gt.labels.size(); ++i)
    if (gt.labels[i]) mx[gt.labels[i] - 1] = std::max(mx[gt.labels[i] - 1], probs[i]);
  return mx;
}

}  // namespace detail

/// Event counts for one scene at threshold t. Ground-truth events are the
/// 8-connected components of label AND valid; an event is detected when any
/// predicted positive pixel falls inside it.
inline EventCounts fire_event_counts(const float* probs, const std::uint8_t* labels, const std::uint8_t* valid, std::size_t h,
                                     std::size_t w, double t) {
  const Labeling gt = label_components(labels, valid, h, w);
  EventCounts c;
  c.gt_events = gt.count;
  for (float m : detail::event_max(probs, gt)) c.gt_detected += static_cast<double>(m) >= t;
  detail::count_predictions(probs, valid, gt, t, c);
  return c;
}

inline FireF1 fire_f1(const std::vector<float>& probs, const std::vector<std::uint8_t>& labels, const std::vector<std::uint8_t>& valid,
                      std::size_t h, std::size_t w, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("fire_f1: threshold must be in (0, 1)");
  if (probs.size() != h * w || labels.size() != h * w || valid.size() != h * w) throw ShapeError("fire_f1", "buffers do not match h*w");
  return fire_f1_from_counts(fire_event_counts(probs.data(), labels.data(), valid.data(), h, w, t));
}

/// Pooled event counts at every grid threshold, accumulated scene by scene.
class ThresholdSweep {
 public:
  /// Grid t = k / steps for k = 1 .. steps - 1.
  explicit ThresholdSweep(std::size_t steps = 100) : steps_(steps), counts_(steps - 1) {
    if (steps < 2) throw ConfigError("ThresholdSweep: need at least 2 steps");
  }

  double threshold(std::size_t k) const { return static_cast<double>(k + 1) / static_cast<double>(steps_); }
  std::size_t size() const noexcept { return counts_.size(); }

  /// Event counts of one scene at every grid threshold.
  std::vector<EventCounts> scene_counts(const float* probs, const std::uint8_t* labels, const std::uint8_t* valid, std::size_t h,
                                        std::size_t w) const {
    const Labeling gt = label_components(labels, valid, h, w);
    const auto mx = detail::event_max(probs, gt);
    std::vector<EventCounts> out(counts_.size());
    for (std::size_t k = 0; k < counts_.size(); ++k) {
      const double t = threshold(k);
      out[k].gt_events = gt.count;
      for (float m : mx) out[k].gt_detected += static_cast<double>(m) >= t;
      detail::count_predictions(probs, valid, gt, t, out[k]);
    }
    return out;
  }

  void add_counts(const std::vector<EventCounts>& c) {
    if (c.size() != counts_.size()) throw ShapeError("ThresholdSweep::add_counts", "grid size mismatch");
    for (std::size_t k = 0; k < c.size(); ++k) counts_[k] += c[k];
  }

  void add_scene(const float* probs, const std::uint8_t* labels, const std::uint8_t* valid, std::size_t h, std::size_t w) {
    add_counts(scene_counts(probs, labels, valid, h, w));
  }

  FireF1 at(std::size_t k) const { return fire_f1_from_counts(counts_[k]); }

  /// Grid point with the highest pooled F1; ties go to the larger threshold.
  std::size_t best_index() const {
    std::size_t best = 0;
    double best_f1 = -1;
    for (std::size_t k = 0; k < counts_.size(); ++k) {
      const double f = at(k).f1;
      if (f >= best_f1) {
        best_f1 = f;
        best = k;
      }
    }
    return best;
  }

  double select() const {
    std::uint64_t events = 0;
    if (!counts_.empty()) events = counts_[0].gt_events;
    if (events == 0) throw ConfigError("select_threshold: the validation split has no fire events");
    return threshold(best_index());
  }

 private:
  std::size_t steps_;
  std::vector<EventCounts> counts_;
};

}  // namespace firemae::eval
