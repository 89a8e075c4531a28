#include "pnl/losses.hpp"

#include "pnl/augment.hpp"
#include "pnl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pnl {

namespace {

void require_same_shape(const ProbMap& a, const ProbMap& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

}  // namespace

LossWithGrad loss_pn(const ProbMap& pred, const NeighborhoodMask& mask) {
  if (pred.rows() != mask.height() || pred.cols() != mask.width()) {
    throw std::invalid_argument("loss_pn: shape mismatch");
  }
  if (mask.area <= 0) throw std::invalid_argument("loss_pn: empty neighborhood mask");
  const double inv_area = 1.0 / static_cast<double>(mask.area);
  LossWithGrad out;
  out.grad = ProbMap::Zero(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (mask.matrix.data()[i] == 0) continue;
    const double diff = 1.0 - pred.data()[i];
    sum += std::abs(diff);
    // d|1-p|/dp = -sign(1-p); predictions are < 1, the subgradient at 1 is 0.
    out.grad.data()[i] = diff > 0.0 ? -inv_area : (diff < 0.0 ? inv_area : 0.0);
  }
  out.value = sum * inv_area;
  return out;
}

LossWithGrad loss_pxl(const ProbMap& pred, const ProbMap& target) {
  require_same_shape(pred, target, "loss_pxl");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  LossWithGrad out;
  out.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred.data()[i], kProbEpsilon, 1.0 - kProbEpsilon);
    const double y = target.data()[i];
    sum -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    // Gradient evaluated at the clamped value so saturated outputs still learn.
    out.grad.data()[i] = (p - y) / (p * (1.0 - p)) * inv_n;
  }
  out.value = sum * inv_n;
  return out;
}

LossWithGrad loss_cs(const ProbMap& a, const ProbMap& b) {
  require_same_shape(a, b, "loss_cs");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  const ProbMap diff = a - b;
  return {diff.square().sum() * inv_n, (2.0 * inv_n) * diff};
}

void LossWeights::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
}

LossBreakdown combine_terms(const RawTerms& raw, const LossWeights& w, double score, bool pns) {
  LossBreakdown b;
  b.raw = raw;
  b.score = score;
  b.w_pxl = w.lambda * score * raw.pxl;
  b.w_cs = (1.0 - w.lambda) * raw.cs;
  b.w_pn = pns ? (1.0 - w.lambda) * raw.pn : 0.0;
  b.total = b.w_pxl + b.w_cs + b.w_pn;
  return b;
}

namespace {

CompositeLoss pair_loss(const PairInputs& in, double score, const LossWeights& w, bool pns) {
  w.validate();
  if (!(score >= 0.0 && score <= 1.0)) throw std::invalid_argument("score must lie in [0,1]");
  require_same_shape(in.pred, in.pred_mirror, "pair loss");

  const LossWithGrad pxl_a = loss_pxl(in.pred, in.target);
  const LossWithGrad pxl_b = loss_pxl(in.pred_mirror, in.target_mirror);
  // Consistency compares the mirrored x-prediction with the x'-prediction.
  const LossWithGrad cs = loss_cs(mirror_map(in.pred), in.pred_mirror);

  RawTerms raw;
  raw.pxl = pxl_a.value + pxl_b.value;
  raw.cs = cs.value;

  const double c_pxl = w.lambda * score;
  const double c_cs = 1.0 - w.lambda;
  const double c_pn = pns ? 1.0 - w.lambda : 0.0;

  CompositeLoss out;
  out.grad_pred = c_pxl * pxl_a.grad + c_cs * mirror_map(cs.grad);
  out.grad_pred_mirror = c_pxl * pxl_b.grad - c_cs * cs.grad;

  if (in.mask.area > 0) {
    const LossWithGrad pn = loss_pn(in.pred, in.mask);
    raw.pn += pn.value;
    if (c_pn != 0.0) out.grad_pred += c_pn * pn.grad;
  }
  if (in.mask_mirror.area > 0) {
    const LossWithGrad pn = loss_pn(in.pred_mirror, in.mask_mirror);
    raw.pn += pn.value;
    if (c_pn != 0.0) out.grad_pred_mirror += c_pn * pn.grad;
  }
  out.terms = combine_terms(raw, w, score, pns);
  return out;
}

}  // namespace

CompositeLoss teacher_loss(const PairInputs& in, const LossWeights& w, bool pns) {
  return pair_loss(in, 1.0, w, pns);
}

CompositeLoss student_loss(const PairInputs& in, double score, const LossWeights& w, bool pns) {
  return pair_loss(in, score, w, pns);
}

}  // namespace pnl
