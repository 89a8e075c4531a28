#include "pnl/metrics.hpp"

#include <stdexcept>
#include <string>

namespace pnl {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw std::invalid_argument("confusion: shape mismatch");
  }
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] != 0;
    const bool g = gt.data()[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

BinaryMask threshold(const ProbMap& probs, double level) { return (probs > level).cast<std::uint8_t>(); }

namespace {

Metric ratio(std::int64_t num, std::int64_t den) {
  if (den <= 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metric iou_foreground(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn); }
Metric iou_background(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fn + c.fp); }

Metric miou(const ConfusionCounts& c) {
  const Metric fg = iou_foreground(c);
  const Metric bg = iou_background(c);
  if (fg && bg) return 0.5 * (*fg + *bg);
  if (fg) return fg;
  return bg;
}

Metric precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }
Metric recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
Metric pixel_accuracy(const ConfusionCounts& c) { return ratio(c.tp + c.tn, c.total()); }
Metric dice(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }

Averaging parse_averaging(std::string_view text) {
  if (text == "micro") return Averaging::Micro;
  if (text == "macro") return Averaging::Macro;
  throw std::invalid_argument("unknown averaging '" + std::string(text) + "'");
}

std::string_view to_string(Averaging a) { return a == Averaging::Micro ? "micro" : "macro"; }

MetricsReport report_from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.miou = miou(c);
  r.pa = pixel_accuracy(c);
  r.recall = recall(c);
  r.precision = precision(c);
  r.dice = dice(c);
  r.images = 1;
  return r;
}

MetricsReport aggregate(std::span<const ConfusionCounts> per_image, Averaging mode) {
  if (per_image.empty()) throw std::invalid_argument("aggregate: no images");
  if (mode == Averaging::Micro) {
    ConfusionCounts sum;
    for (const auto& c : per_image) sum += c;
    MetricsReport r = report_from_counts(sum);
    r.images = per_image.size();
    return r;
  }

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    void add(const Metric& m) {
      if (m) {
        sum += *m;
        ++n;
      }
    }
    Metric mean() const { return n == 0 ? Metric{} : Metric{sum / static_cast<double>(n)}; }
  };
  Acc a_miou, a_pa, a_rec, a_prec, a_dice;
  std::size_t excluded = 0;
  for (const auto& c : per_image) {
    const MetricsReport r = report_from_counts(c);
    for (const Metric* m : {&r.miou, &r.pa, &r.recall, &r.precision, &r.dice}) {
      if (!m->has_value()) ++excluded;
    }
    a_miou.add(r.miou);
    a_pa.add(r.pa);
    a_rec.add(r.recall);
    a_prec.add(r.precision);
    a_dice.add(r.dice);
  }
  MetricsReport r;
  r.miou = a_miou.mean();
  r.pa = a_pa.mean();
  r.recall = a_rec.mean();
  r.precision = a_prec.mean();
  r.dice = a_dice.mean();
  r.images = per_image.size();
  r.undefined_excluded = excluded;
  return r;
}

bool point_containment(const ProbMap& pseudo, std::span<const Point> points) {
  for (const Point& p : points) {
    if (!in_bounds(p, static_cast<int>(pseudo.rows()), static_cast<int>(pseudo.cols()))) return false;
    if (!(pseudo(p.row, p.col) > 0.5)) return false;
  }
  return true;
}

}  // namespace pnl
