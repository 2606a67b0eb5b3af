#pragma once

#include "licaf/nn.hpp"

#include <numeric>
#include <string>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Frame folding: [N, C, T, H, W] <-> [N*T, C, H, W]. Convolutions treat every
// frame independently with shared weights, which is what makes the extractor
// temporally equivariant.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> fold_time(const Tensor<S>& x) {
  const long n = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  Tensor<S> out({n * t, c, h, w});
  const long hw = h * w;
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci)
      for (long ti = 0; ti < t; ++ti) {
        const S* src = x.data() + ((ni * c + ci) * t + ti) * hw;
        S* dst = out.data() + ((ni * t + ti) * c + ci) * hw;
        std::copy(src, src + hw, dst);
      }
  return out;
}

template <class S>
Tensor<S> unfold_time(const Tensor<S>& frames, long n, long t) {
  const long c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
  Tensor<S> out({n, c, t, h, w});
  const long hw = h * w;
  for (long ni = 0; ni < n; ++ni)
    for (long ti = 0; ti < t; ++ti)
      for (long ci = 0; ci < c; ++ci) {
        const S* src = frames.data() + ((ni * t + ti) * c + ci) * hw;
        S* dst = out.data() + ((ni * c + ci) * t + ti) * hw;
        std::copy(src, src + hw, dst);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Residual basic block: conv-bn-relu-conv-bn plus (projected) skip, relu.
// ---------------------------------------------------------------------------

template <class S>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(long in_ch, long out_ch, int stride)
      : conv1_(in_ch, out_ch, 3, stride, 1), conv2_(out_ch, out_ch, 3, 1, 1), bn1_(out_ch), bn2_(out_ch),
        project_(stride != 1 || in_ch != out_ch) {
    if (project_) {
      proj_conv_ = nn::Conv2d<S>(in_ch, out_ch, 1, stride, 0);
      proj_bn_ = nn::BatchNorm2d<S>(out_ch);
    }
  }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    Tensor<S> main = relu1_.forward(bn1_.forward(conv1_.forward(x, training), training), training);
    main = bn2_.forward(conv2_.forward(main, training), training);
    Tensor<S> skip = project_ ? proj_bn_.forward(proj_conv_.forward(x, training), training) : x;
    for (long i = 0; i < main.numel(); ++i) main[i] += skip[i];
    return relu2_.forward(main, training);
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dsum = relu2_.backward(dy);
    Tensor<S> dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(dsum)))));
    if (project_) {
      Tensor<S> dskip = proj_conv_.backward(proj_bn_.backward(dsum));
      for (long i = 0; i < dx.numel(); ++i) dx[i] += dskip[i];
    } else {
      for (long i = 0; i < dx.numel(); ++i) dx[i] += dsum[i];
    }
    return dx;
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (project_) proj_conv_.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    conv1_.collect(prefix + ".conv1", out);
    bn1_.collect(prefix + ".bn1", out);
    conv2_.collect(prefix + ".conv2", out);
    bn2_.collect(prefix + ".bn2", out);
    if (project_) {
      proj_conv_.collect(prefix + ".proj_conv", out);
      proj_bn_.collect(prefix + ".proj_bn", out);
    }
  }

 private:
  nn::Conv2d<S> conv1_, conv2_, proj_conv_;
  nn::BatchNorm2d<S> bn1_, bn2_, proj_bn_;
  nn::Relu<S> relu1_, relu2_;
  bool project_ = false;
};

// ---------------------------------------------------------------------------
// ResNet-9 extractor. One of these exists per modality; the two instances
// share the architecture but never the weights.
// ---------------------------------------------------------------------------

template <class S>
class ResNet9 {
 public:
  ResNet9() = default;

  /// width is the final channel count C0; it must be divisible by 8.
  ResNet9(long in_ch, long width, long input_hw)
      : in_ch_(in_ch), width_(width), input_hw_(input_hw) {
    if (width % 8 != 0) throw std::invalid_argument("ResNet9: width must be divisible by 8");
    const long w8 = width / 8;
    stem_ = nn::Conv2d<S>(in_ch, w8, 3, 1, 1);
    stem_bn_ = nn::BatchNorm2d<S>(w8);
    stages_[0] = BasicBlock<S>(w8, w8, 1);
    stages_[1] = BasicBlock<S>(w8, width / 4, 2);
    stages_[2] = BasicBlock<S>(width / 4, width / 2, 2);
    stages_[3] = BasicBlock<S>(width / 2, width, 1);
  }

  long out_channels() const { return width_; }
  long out_hw() const { return input_hw_ / 4; }

  /// frames: [N, ch, T, H, W] -> feature maps [N, C0, T, H/4, W/4].
  Tensor<S> extract(const Tensor<S>& x, bool training) {
    check_axis(x.ndim(), 5, "extract_features", "ndim");
    check_axis(x.dim(1), in_ch_, "extract_features", "channels");
    check_axis(x.dim(3), input_hw_, "extract_features", "H");
    check_axis(x.dim(4), input_hw_, "extract_features", "W");
    n_ = x.dim(0);
    t_ = x.dim(2);
    Tensor<S> f = fold_time(x);
    f = stem_relu_.forward(stem_bn_.forward(stem_.forward(f, training), training), training);
    for (auto& stage : stages_) f = stage.forward(f, training);
    return unfold_time(f, n_, t_);
  }

  Tensor<S> backward(const Tensor<S>& dout) {
    Tensor<S> d = fold_time(dout);
    for (int i = 3; i >= 0; --i) d = stages_[i].backward(d);
    d = stem_.backward(stem_bn_.backward(stem_relu_.backward(d)));
    return unfold_time(d, n_, t_);
  }

  void init(Rng& rng) {
    stem_.init(rng);
    for (auto& stage : stages_) stage.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    stem_.collect(prefix + ".stem", out);
    stem_bn_.collect(prefix + ".stem_bn", out);
    for (int i = 0; i < 4; ++i) stages_[i].collect(prefix + ".stage" + std::to_string(i + 1), out);
  }

 private:
  long in_ch_ = 1, width_ = 512, input_hw_ = 64;
  nn::Conv2d<S> stem_;
  nn::BatchNorm2d<S> stem_bn_;
  nn::Relu<S> stem_relu_;
  BasicBlock<S> stages_[4];
  long n_ = 0, t_ = 0;
};

// ---------------------------------------------------------------------------
// Horizontal Pyramid Pooling. For each bin count b the height axis is split
// into b equal strips; each strip is pooled over its spatial extent by
// max + mean and the strips of all bins are concatenated in order:
// [N, C, T, H, W] -> [N, C, T, P] with P = sum(bins).
// ---------------------------------------------------------------------------

inline const std::vector<long> kDefaultHppBins = {1, 2, 4, 8, 16};

template <class S>
class HppOp {
 public:
  HppOp() : bins_(kDefaultHppBins) {}
  explicit HppOp(std::vector<long> bins) : bins_(std::move(bins)) {}

  long parts() const { return std::accumulate(bins_.begin(), bins_.end(), 0L); }
  const std::vector<long>& bins() const { return bins_; }

  Tensor<S> forward(const Tensor<S>& fm, bool training) {
    check_axis(fm.ndim(), 5, "hpp", "ndim");
    const long n = fm.dim(0), c = fm.dim(1), t = fm.dim(2), h = fm.dim(3), w = fm.dim(4);
    for (long b : bins_)
      if (h % b != 0)
        throw std::invalid_argument("hpp: H " + std::to_string(h) + " not divisible by bin " + std::to_string(b));
    const long p = parts();
    Tensor<S> out({n, c, t, p});
    Tensor<long> argmax;
    if (training) argmax = Tensor<long>({n, c, t, p});
    const long hw = h * w;
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c; ++ci)
        for (long ti = 0; ti < t; ++ti) {
          const S* plane = fm.data() + ((ni * c + ci) * t + ti) * hw;
          long part = 0;
          for (long b : bins_) {
            const long rows = h / b;
            for (long s = 0; s < b; ++s, ++part) {
              const S* strip = plane + s * rows * w;
              S best = strip[0];
              long best_i = 0;
              S sum = 0;
              for (long i = 0; i < rows * w; ++i) {
                sum += strip[i];
                if (strip[i] > best) {
                  best = strip[i];
                  best_i = i;
                }
              }
              out.at(ni, ci, ti, part) = best + sum / static_cast<S>(rows * w);
              if (training) argmax.at(ni, ci, ti, part) = s * rows * w + best_i;
            }
          }
        }
    if (training) {
      argmax_ = std::move(argmax);
      in_shape_ = fm.shape();
    }
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dout) {
    const long n = in_shape_[0], c = in_shape_[1], t = in_shape_[2], h = in_shape_[3], w = in_shape_[4];
    Tensor<S> dx(in_shape_);
    const long hw = h * w;
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c; ++ci)
        for (long ti = 0; ti < t; ++ti) {
          S* plane = dx.data() + ((ni * c + ci) * t + ti) * hw;
          long part = 0;
          for (long b : bins_) {
            const long rows = h / b;
            for (long s = 0; s < b; ++s, ++part) {
              const S d = dout.at(ni, ci, ti, part);
              plane[argmax_.at(ni, ci, ti, part)] += d;
              const S dm = d / static_cast<S>(rows * w);
              S* strip = plane + s * rows * w;
              for (long i = 0; i < rows * w; ++i) strip[i] += dm;
            }
          }
        }
    return dx;
  }

 private:
  std::vector<long> bins_;
  Tensor<long> argmax_;
  std::vector<long> in_shape_;
};

/// One-shot HPP over fresh state with the given bins.
template <class S>
Tensor<S> hpp(const Tensor<S>& fm, const std::vector<long>& bins = kDefaultHppBins) {
  HppOp<S> op(bins);
  return op.forward(fm, false);
}

}  // namespace licaf
