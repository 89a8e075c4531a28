#pragma once

#include "pnl/core_types.hpp"

#include <optional>
#include <span>
#include <string_view>

namespace pnl {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground iff p > 0.5.
BinaryMask threshold(const ProbMap& probs, double level = 0.5);

/// Percentages; std::nullopt marks a zero denominator.
using Metric = std::optional<double>;

Metric iou_foreground(const ConfusionCounts& c);
Metric iou_background(const ConfusionCounts& c);
/// Mean of the defined class IoUs (background IoU = TN/(TN+FN+FP)).
Metric miou(const ConfusionCounts& c);
Metric precision(const ConfusionCounts& c);
Metric recall(const ConfusionCounts& c);
Metric pixel_accuracy(const ConfusionCounts& c);
Metric dice(const ConfusionCounts& c);

struct MetricsReport {
  Metric miou;
  Metric pa;
  Metric recall;
  Metric precision;
  Metric dice;
  /// Fraction of pseudo-labels whose foreground covers all annotated points.
  std::optional<double> pseudo_point_containment;
  /// mIoU of thresholded pseudo-labels against held-out masks.
  Metric pseudo_miou;
  std::size_t images = 0;
  /// Per-metric count of images excluded for an undefined value (macro mode).
  std::size_t undefined_excluded = 0;
};

enum class Averaging { Micro, Macro };
Averaging parse_averaging(std::string_view text);
std::string_view to_string(Averaging a);

MetricsReport report_from_counts(const ConfusionCounts& c);

/// Micro: sum confusion counts over images, then compute ratios.
/// Macro: per-image metrics averaged over images where defined.
MetricsReport aggregate(std::span<const ConfusionCounts> per_image, Averaging mode = Averaging::Micro);

/// 1 iff every point lies on a foreground pixel (p > 0.5).
bool point_containment(const ProbMap& pseudo, std::span<const Point> points);

}  // namespace pnl
