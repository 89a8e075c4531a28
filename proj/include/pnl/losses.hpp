#pragma once

#include "pnl/core_types.hpp"
#include "pnl/neighborhood.hpp"

namespace pnl {

/// Predictions are clamped into [eps, 1-eps] before any log.
inline constexpr double kProbEpsilon = 1e-7;

/// Loss value and its gradient with respect to the first prediction argument.
struct LossWithGrad {
  double value = 0.0;
  ProbMap grad;
};

/// Point-neighborhood L1 loss: mean of |1 - p| over the pixels of the mask,
/// normalized by the mask's pixel count. Throws on an empty mask.
LossWithGrad loss_pn(const ProbMap& pred, const NeighborhoodMask& mask);

/// Binary cross-entropy against a (possibly soft) target, averaged over H*W.
LossWithGrad loss_pxl(const ProbMap& pred, const ProbMap& target);

/// Mean squared difference. The gradient with respect to `b` is -grad.
LossWithGrad loss_cs(const ProbMap& a, const ProbMap& b);

struct LossWeights {
  double lambda = 0.5;

  void validate() const;
};

/// Raw (unweighted) values of the six terms of a mirrored pair.
struct RawTerms {
  double pxl = 0.0;     // L_pxl(x) + L_pxl(x')
  double cs = 0.0;      // L_cs(mirror(pred(x)), pred(x'))
  double pn = 0.0;      // L_pn(x) + L_pn(x')
};

struct LossBreakdown {
  RawTerms raw;
  double score = 1.0;   // PSM weight applied to the pixel term
  double w_pxl = 0.0;   // weighted contributions; total = w_pxl + w_cs + w_pn
  double w_cs = 0.0;
  double w_pn = 0.0;
  double total = 0.0;
};

/// total = lambda*s*pxl + (1-lambda)*cs + pn_coeff*(1-lambda)*pn, where
/// pn_coeff is 1 with point-neighborhood supervision enabled and 0 otherwise.
LossBreakdown combine_terms(const RawTerms& raw, const LossWeights& w, double score, bool pns);

/// Inputs of one mirrored training pair: branch a is the (augmented) input x,
/// branch b its mirror x'. Targets and masks of branch b are the mirrors of
/// branch a.
struct PairInputs {
  const ProbMap& pred;
  const ProbMap& pred_mirror;
  const ProbMap& target;
  const ProbMap& target_mirror;
  const NeighborhoodMask& mask;
  const NeighborhoodMask& mask_mirror;
};

struct CompositeLoss {
  LossBreakdown terms;
  ProbMap grad_pred;
  ProbMap grad_pred_mirror;
};

/// Teacher objective for a D1 pair (score fixed at 1).
CompositeLoss teacher_loss(const PairInputs& in, const LossWeights& w, bool pns = true);

/// Student objective: the pixel term is scaled by the PSM score s; the
/// consistency and neighborhood terms are not. A mask without pixels (e.g.
/// cleared by patch mixing) contributes no neighborhood term.
CompositeLoss student_loss(const PairInputs& in, double score, const LossWeights& w,
                           bool pns = true);

}  // namespace pnl
