#include "pnl/psm.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pnl {

PsmMode parse_psm_mode(std::string_view text) {
  if (text == "count") return PsmMode::Count;
  if (text == "prob_sum") return PsmMode::ProbSum;
  throw std::invalid_argument("unknown psm_mode '" + std::string(text) + "'");
}

std::string_view to_string(PsmMode mode) {
  return mode == PsmMode::Count ? "count" : "prob_sum";
}

double psm_score(const ProbMap& probs, const NeighborhoodMask& mask, PsmMode mode) {
  if (probs.rows() != mask.height() || probs.cols() != mask.width()) {
    throw std::invalid_argument("psm_score: shape mismatch");
  }
  if (mask.area <= 0) throw std::invalid_argument("psm_score: empty neighborhood mask");
  std::int64_t recalled = 0;
  double mass = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (mask.matrix.data()[i] == 0) continue;
    const double p = probs.data()[i];
    if (p > 0.5) {
      ++recalled;
      mass += p;
    }
  }
  const double numerator = mode == PsmMode::Count ? static_cast<double>(recalled) : mass;
  return numerator / static_cast<double>(mask.area);
}

double psm_score(const PseudoLabel& pseudo, const NeighborhoodMask& mask, PsmMode mode) {
  return psm_score(pseudo.probs, mask, mode);
}

double apply_score_threshold(double score, double threshold) {
  return threshold > 0.0 && score < threshold ? 0.0 : score;
}

BatchScores score_batch(std::span<const ProbMap> pseudos, std::span<const NeighborhoodMask> masks,
                        double below, PsmMode mode) {
  if (pseudos.size() != masks.size()) throw std::invalid_argument("score_batch: length mismatch");
  BatchScores out;
  out.scores.reserve(pseudos.size());
  for (std::size_t i = 0; i < pseudos.size(); ++i) out.scores.push_back(psm_score(pseudos[i], masks[i], mode));
  if (out.scores.empty()) return out;
  ScoreSummary s;
  double sum = 0.0;
  std::size_t n_below = 0;
  s.min = out.scores.front();
  for (double v : out.scores) {
    sum += v;
    s.min = std::min(s.min, v);
    if (v < below) ++n_below;
  }
  s.mean = sum / static_cast<double>(out.scores.size());
  s.fraction_below = static_cast<double>(n_below) / static_cast<double>(out.scores.size());
  out.summary = s;
  return out;
}

}  // namespace pnl
