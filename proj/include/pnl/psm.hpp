#pragma once

#include "pnl/core_types.hpp"
#include "pnl/neighborhood.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace pnl {

/// How recalled neighborhood pixels are accumulated in the numerator.
enum class PsmMode {
  Count,       // number of mask pixels with p > 0.5
  ProbSum,     // sum of p over those pixels
};

PsmMode parse_psm_mode(std::string_view text);
std::string_view to_string(PsmMode mode);

/// Fraction of the neighborhood the pseudo-label recalls as foreground; in
/// [0,1]. p == 0.5 counts as background. Throws on an empty mask.
double psm_score(const ProbMap& probs, const NeighborhoodMask& mask, PsmMode mode = PsmMode::Count);
double psm_score(const PseudoLabel& pseudo, const NeighborhoodMask& mask,
                 PsmMode mode = PsmMode::Count);

/// Optional hard cutoff: scores below `threshold` become 0. A threshold of 0
/// leaves scores untouched.
double apply_score_threshold(double score, double threshold);

struct ScoreSummary {
  double mean = 0.0;
  double min = 0.0;
  double fraction_below = 0.0;
};

struct BatchScores {
  std::vector<double> scores;
  /// Empty for an empty batch.
  std::optional<ScoreSummary> summary;
};

BatchScores score_batch(std::span<const ProbMap> pseudos, std::span<const NeighborhoodMask> masks,
                        double below = 0.5, PsmMode mode = PsmMode::Count);

}  // namespace pnl
