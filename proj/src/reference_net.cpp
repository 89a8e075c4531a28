#include "pnl/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pnl {

void SegmentationModel::step(std::span<const double> grad, double lr) {
  std::vector<double> p = parameters();
  if (grad.size() != p.size()) throw std::invalid_argument("step: gradient length mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
  set_parameters(p);
}

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;

// Eigen's vectorized reductions peel an unaligned head, so buffer alignment
// would otherwise change summation order between runs.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  AlignedVec<T> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, T(0)) {}
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  T* ch(int k) { return v.data() + k * plane(); }
  const T* ch(int k) const { return v.data() + k * plane(); }
};

struct ConvSpec {
  int in_c = 0;
  int out_c = 0;
  int k = 3;
  int stride = 1;
  std::size_t offset = 0;  // weights (out_c x in_c*k*k) followed by bias (out_c)

  int pad() const { return k / 2; }
  std::size_t weight_count() const { return static_cast<std::size_t>(out_c) * in_c * k * k; }
  std::size_t total() const { return weight_count() + out_c; }
  int out_size(int n) const { return (n + 2 * pad() - k) / stride + 1; }
};

/// Output columns [lo, hi) whose input column ox*stride + kx - pad is in bounds.
inline void valid_range(int ow, int iw, int stride, int offset, int& lo, int& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = iw - offset <= 0 ? 0 : std::min(ow, (iw - offset - 1) / stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const Tensor<T>& in, const ConvSpec& s, int oh, int ow, Mat<T>& cols) {
  const int kk = s.k * s.k;
  cols.resize(static_cast<Eigen::Index>(in.c) * kk, static_cast<Eigen::Index>(oh) * ow);
  const int pad = s.pad();
  for (int ci = 0; ci < in.c; ++ci) {
    const T* src = in.ch(ci);
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        T* dst = cols.data() + (static_cast<std::size_t>(ci) * kk + ky * s.k + kx) * oh * ow;
        const int offset = kx - pad;
        int lo = 0, hi = 0;
        valid_range(ow, in.w, s.stride, offset, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride + ky - pad;
          T* row = dst + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= in.h) {
            std::fill(row, row + ow, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * in.w + offset;
          std::fill(row, row + lo, T(0));
          if (s.stride == 1) {
            std::copy(srow + lo, srow + hi, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = srow[ox * s.stride];
          }
          std::fill(row + hi, row + ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& dcols, const ConvSpec& s, int oh, int ow, Tensor<T>& din) {
  const int kk = s.k * s.k;
  const int pad = s.pad();
  for (int ci = 0; ci < din.c; ++ci) {
    T* dst = din.ch(ci);
    for (int ky = 0; ky < s.k; ++ky) {
      for (int kx = 0; kx < s.k; ++kx) {
        const T* src = dcols.data() + (static_cast<std::size_t>(ci) * kk + ky * s.k + kx) * oh * ow;
        const int offset = kx - pad;
        int lo = 0, hi = 0;
        valid_range(ow, din.w, s.stride, offset, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride + ky - pad;
          if (iy < 0 || iy >= din.h) continue;
          const T* row = src + static_cast<std::size_t>(oy) * ow;
          T* drow = dst + static_cast<std::size_t>(iy) * din.w + offset;
          if (s.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) drow[ox] += row[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * s.stride] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_forward(const ConvSpec& s, const T* params, const Tensor<T>& in, Mat<T>& cols) {
  const int oh = s.out_size(in.h);
  const int ow = s.out_size(in.w);
  im2col(in, s, oh, ow, cols);
  Tensor<T> out(s.out_c, oh, ow);
  CMapMat<T> weights(params, s.out_c, static_cast<Eigen::Index>(in.c) * s.k * s.k);
  MapMat<T> y(out.v.data(), s.out_c, static_cast<Eigen::Index>(oh) * ow);
  y.noalias() = weights * cols;
  const T* bias = params + s.weight_count();
  for (int o = 0; o < s.out_c; ++o) y.row(o).array() += bias[o];
  return out;
}

/// Accumulates parameter gradients; returns d(input) when requested.
template <typename T>
void conv_backward(const ConvSpec& s, const T* params, const Mat<T>& cols, const Tensor<T>& dout,
                   double* grad, Tensor<T>* din) {
  const Eigen::Index p = static_cast<Eigen::Index>(dout.h) * dout.w;
  const Eigen::Index kdim = static_cast<Eigen::Index>(s.in_c) * s.k * s.k;
  CMapMat<T> dy(dout.v.data(), s.out_c, p);
  const Mat<T> dw = dy * cols.transpose();
  for (Eigen::Index i = 0; i < dw.size(); ++i) grad[i] += static_cast<double>(dw.data()[i]);
  for (int o = 0; o < s.out_c; ++o) grad[s.weight_count() + o] += static_cast<double>(dy.row(o).sum());
  if (din != nullptr) {
    CMapMat<T> weights(params, s.out_c, kdim);
    const Mat<T> dcols = weights.transpose() * dy;
    col2im(dcols, s, dout.h, dout.w, *din);
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& x : t.v) x = x > T(0) ? x : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& activ, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.v.size(); ++i) {
    if (!(activ.v[i] > T(0))) grad.v[i] = T(0);
  }
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& in, int th, int tw) {
  Tensor<T> out(in.c, th, tw);
  for (int k = 0; k < in.c; ++k) {
    const T* src = in.ch(k);
    T* dst = out.ch(k);
    for (int y = 0; y < th; ++y) {
      const T* srow = src + static_cast<std::size_t>(y / 2) * in.w;
      for (int x = 0; x < tw; ++x) dst[static_cast<std::size_t>(y) * tw + x] = srow[x / 2];
    }
  }
  return out;
}

/// Adds the gradient of an upsample (restricted to the first `channels`
/// planes of `dout`) into `din`.
template <typename T>
void upsample_backward(const Tensor<T>& dout, int channels, Tensor<T>& din) {
  for (int k = 0; k < channels; ++k) {
    const T* src = dout.ch(k);
    T* dst = din.ch(k);
    for (int y = 0; y < dout.h; ++y) {
      T* drow = dst + static_cast<std::size_t>(y / 2) * din.w;
      const T* srow = src + static_cast<std::size_t>(y) * dout.w;
      for (int x = 0; x < dout.w; ++x) drow[x / 2] += srow[x];
    }
  }
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

enum Layer { kDown1, kDown2, kDown3, kMid1, kMid2, kUp3, kUp2, kUp1, kHead, kLayerCount };

std::array<ConvSpec, kLayerCount> layout(const ReferenceNetConfig& cfg) {
  const int c = cfg.in_channels;
  const int w = cfg.width;
  std::array<ConvSpec, kLayerCount> specs{{
      {c, w, 3, 2, 0},
      {w, 2 * w, 3, 2, 0},
      {2 * w, 2 * w, 3, 2, 0},
      {2 * w, 2 * w, 3, 1, 0},
      {2 * w, 2 * w, 3, 1, 0},
      {2 * w, 2 * w, 3, 1, 0},
      {2 * w, w, 3, 1, 0},
      {w + c, w, 3, 1, 0},
      {w, 1, 1, 1, 0},
  }};
  std::size_t off = 0;
  for (auto& s : specs) {
    s.offset = off;
    off += s.total();
  }
  return specs;
}

template <typename T>
class ReferenceNet final : public SegmentationModel {
 public:
  ReferenceNet(const ReferenceNetConfig& cfg, Rng& init) : cfg_(cfg), specs_(layout(cfg)) {
    if (cfg.in_channels <= 0 || cfg.width <= 0) throw std::invalid_argument("bad ReferenceNet config");
    params_.assign(specs_.back().offset + specs_.back().total(), 0.0);
    for (const ConvSpec& s : specs_) {
      // He-normal weights, zero bias. Box-Muller keeps this platform-stable.
      const double stddev = std::sqrt(2.0 / (static_cast<double>(s.in_c) * s.k * s.k));
      const double scale = (&s == &specs_[kHead]) ? 0.1 : 1.0;
      for (std::size_t i = 0; i < s.weight_count(); ++i) {
        const double u1 = 1.0 - uniform01(init);
        const double u2 = uniform01(init);
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        params_[s.offset + i] = scale * stddev * z;
      }
    }
    sync();
  }

  std::size_t parameter_count() const override { return params_.size(); }
  std::vector<double> parameters() const override { return params_; }
  void set_parameters(std::span<const double> p) override {
    if (p.size() != params_.size()) throw std::invalid_argument("set_parameters: length mismatch");
    params_.assign(p.begin(), p.end());
    sync();
  }

  std::unique_ptr<SegmentationModel> clone() const override {
    return std::make_unique<ReferenceNet>(*this);
  }

  struct NetTrace final : Trace {
    int h = 0, w = 0;
    std::array<Mat<T>, kLayerCount> cols;
    Tensor<T> a1, a2, a3, m1, m2, c4, c5, c6;
    std::vector<double> probs;
  };

  ProbMap forward(const Image& image, std::unique_ptr<Trace>* trace) const override {
    if (image.channels() != cfg_.in_channels) throw std::invalid_argument("ReferenceNet: channel mismatch");
    auto tr = std::make_unique<NetTrace>();
    tr->h = image.height();
    tr->w = image.width();
    Tensor<T> x(image.channels(), image.height(), image.width());
    const auto src = image.data();
    // Per-channel standardization of the input.
    const std::size_t plane = x.plane();
    for (int k = 0; k < x.c; ++k) {
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mean += src[k * plane + i];
      mean /= static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) sq += (src[k * plane + i] - mean) * (src[k * plane + i] - mean);
      const double inv = 1.0 / std::sqrt(sq / static_cast<double>(plane) + 1e-6);
      for (std::size_t i = 0; i < plane; ++i) x.v[k * plane + i] = static_cast<T>((src[k * plane + i] - mean) * inv);
    }

    auto conv = [&](Layer l, const Tensor<T>& in) {
      return conv_forward(specs_[l], w_.data() + specs_[l].offset, in, tr->cols[l]);
    };
    tr->a1 = conv(kDown1, x);
    relu_inplace(tr->a1);
    tr->a2 = conv(kDown2, tr->a1);
    relu_inplace(tr->a2);
    tr->a3 = conv(kDown3, tr->a2);
    relu_inplace(tr->a3);

    // Residual block at the coarsest level widens the receptive field.
    tr->m1 = conv(kMid1, tr->a3);
    relu_inplace(tr->m1);
    tr->m2 = conv(kMid2, tr->m1);
    relu_inplace(tr->m2);
    Tensor<T> b = tr->m2;
    add_inplace(b, tr->a3);

    tr->c4 = conv(kUp3, upsample(b, tr->a2.h, tr->a2.w));
    relu_inplace(tr->c4);
    Tensor<T> s4 = tr->c4;
    add_inplace(s4, tr->a2);

    tr->c5 = conv(kUp2, upsample(s4, tr->a1.h, tr->a1.w));
    relu_inplace(tr->c5);
    Tensor<T> s5 = tr->c5;
    add_inplace(s5, tr->a1);

    tr->c6 = conv(kUp1, concat(upsample(s5, x.h, x.w), x));
    relu_inplace(tr->c6);
    const Tensor<T> z = conv(kHead, tr->c6);

    ProbMap probs(image.height(), image.width());
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      probs.data()[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(z.v[i])));
    }
    if (trace != nullptr) {
      tr->probs.assign(probs.data(), probs.data() + probs.size());
      *trace = std::move(tr);
    }
    return probs;
  }

  void backward(const Trace& base, const ProbMap& grad_probs, std::span<double> grad) const override {
    const auto& tr = dynamic_cast<const NetTrace&>(base);
    if (grad.size() != params_.size()) throw std::invalid_argument("backward: gradient length mismatch");
    if (grad_probs.rows() != tr.h || grad_probs.cols() != tr.w) {
      throw std::invalid_argument("backward: gradient shape mismatch");
    }
    auto g = [&](Layer l) { return grad.data() + specs_[l].offset; };
    auto wt = [&](Layer l) { return w_.data() + specs_[l].offset; };

    Tensor<T> dz(1, tr.h, tr.w);
    for (std::size_t i = 0; i < dz.v.size(); ++i) {
      const double p = tr.probs[i];
      dz.v[i] = static_cast<T>(grad_probs.data()[i] * p * (1.0 - p));
    }
    Tensor<T> dc6(tr.c6.c, tr.h, tr.w);
    conv_backward(specs_[kHead], wt(kHead), tr.cols[kHead], dz, g(kHead), &dc6);
    relu_backward_inplace(tr.c6, dc6);

    Tensor<T> du1(specs_[kUp1].in_c, tr.h, tr.w);
    conv_backward(specs_[kUp1], wt(kUp1), tr.cols[kUp1], dc6, g(kUp1), &du1);
    Tensor<T> ds5(tr.c5.c, tr.c5.h, tr.c5.w);
    upsample_backward(du1, tr.c5.c, ds5);

    Tensor<T> dc5 = ds5;
    relu_backward_inplace(tr.c5, dc5);
    Tensor<T> du2_full(specs_[kUp2].in_c, tr.a1.h, tr.a1.w);
    conv_backward(specs_[kUp2], wt(kUp2), tr.cols[kUp2], dc5, g(kUp2), &du2_full);
    Tensor<T> ds4(tr.c4.c, tr.c4.h, tr.c4.w);
    upsample_backward(du2_full, tr.c4.c, ds4);

    Tensor<T> dc4 = ds4;
    relu_backward_inplace(tr.c4, dc4);
    Tensor<T> du3_full(specs_[kUp3].in_c, tr.a2.h, tr.a2.w);
    conv_backward(specs_[kUp3], wt(kUp3), tr.cols[kUp3], dc4, g(kUp3), &du3_full);
    Tensor<T> db(tr.a3.c, tr.a3.h, tr.a3.w);
    upsample_backward(du3_full, tr.a3.c, db);

    Tensor<T> dm2 = db;
    relu_backward_inplace(tr.m2, dm2);
    Tensor<T> dm1(tr.m1.c, tr.m1.h, tr.m1.w);
    conv_backward(specs_[kMid2], wt(kMid2), tr.cols[kMid2], dm2, g(kMid2), &dm1);
    relu_backward_inplace(tr.m1, dm1);
    Tensor<T> da3 = db;  // residual path
    conv_backward(specs_[kMid1], wt(kMid1), tr.cols[kMid1], dm1, g(kMid1), &da3);
    relu_backward_inplace(tr.a3, da3);
    Tensor<T> da2 = ds4;  // skip into s4
    conv_backward(specs_[kDown3], wt(kDown3), tr.cols[kDown3], da3, g(kDown3), &da2);
    relu_backward_inplace(tr.a2, da2);
    Tensor<T> da1 = ds5;  // skip into s5
    conv_backward(specs_[kDown2], wt(kDown2), tr.cols[kDown2], da2, g(kDown2), &da1);
    relu_backward_inplace(tr.a1, da1);
    conv_backward<T>(specs_[kDown1], wt(kDown1), tr.cols[kDown1], da1, g(kDown1), nullptr);
  }

 private:
  void sync() {
    w_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) w_[i] = static_cast<T>(params_[i]);
  }

  ReferenceNetConfig cfg_;
  std::array<ConvSpec, kLayerCount> specs_;
  std::vector<double> params_;
  AlignedVec<T> w_;
};

}  // namespace

std::unique_ptr<SegmentationModel> make_reference_net(const ReferenceNetConfig& cfg, Rng& init) {
  if (cfg.precision == Precision::Double) return std::make_unique<ReferenceNet<double>>(cfg, init);
  return std::make_unique<ReferenceNet<float>>(cfg, init);
}

std::size_t reference_net_parameter_count(const ReferenceNetConfig& cfg) {
  const auto specs = layout(cfg);
  return specs.back().offset + specs.back().total();
}

}  // namespace pnl
