#pragma once

#include "pnl/core_types.hpp"
#include "pnl/rng.hpp"

#include <memory>
#include <span>
#include <vector>

namespace pnl {

/// Contract every segmentation backbone fulfils to be trained by the
/// teacher/student loop: a deterministic differentiable forward pass to
/// per-pixel foreground probabilities, and a flat parameter view.
class SegmentationModel {
 public:
  /// Opaque activations kept by forward() for backward().
  class Trace {
   public:
    virtual ~Trace() = default;
  };

  virtual ~SegmentationModel() = default;

  virtual std::size_t parameter_count() const = 0;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;

  /// Output has the input's height and width, values in (0,1). When `trace`
  /// is non-null it receives what backward() needs.
  virtual ProbMap forward(const Image& image, std::unique_ptr<Trace>* trace = nullptr) const = 0;

  /// Accumulates d(loss)/d(params) into `param_grad` given d(loss)/d(probs).
  virtual void backward(const Trace& trace, const ProbMap& grad_probs,
                        std::span<double> param_grad) const = 0;

  virtual std::unique_ptr<SegmentationModel> clone() const = 0;

  ProbMap predict(const Image& image) const { return forward(image, nullptr); }

  /// One plain SGD update: params -= lr * grad.
  void step(std::span<const double> grad, double lr);
};

enum class Precision { Float, Double };

struct ReferenceNetConfig {
  int in_channels = 1;
  /// Channel count of the first level; deeper levels use twice as many.
  int width = 8;
  Precision precision = Precision::Float;
};

/// Encoder-decoder with three stride-2 conv blocks, a two-conv residual block
/// at the coarsest level, three nearest-upsample conv blocks with additive
/// skips (the last one also sees the input), and a 1x1 sigmoid head. Inputs
/// are standardized per channel inside forward().
std::unique_ptr<SegmentationModel> make_reference_net(const ReferenceNetConfig& cfg, Rng& init);

std::size_t reference_net_parameter_count(const ReferenceNetConfig& cfg);

}  // namespace pnl
