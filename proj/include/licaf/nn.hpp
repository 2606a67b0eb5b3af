#pragma once

#include "licaf/rng.hpp"
#include "licaf/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace licaf {
namespace nn {

/// A named view into one parameter (or state buffer) of a layer. Buffers
/// (trainable == false, grad == nullptr) are saved in checkpoints but never
/// touched by the optimizer.
template <class S>
struct ParamRef {
  std::string name;
  Tensor<S>* value = nullptr;
  Tensor<S>* grad = nullptr;  // null for non-trainable state (running statistics)
  bool trainable = true;
};

template <class S>
void he_normal_init(Tensor<S>& w, long fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (long i = 0; i < w.numel(); ++i) w[i] = static_cast<S>(rng.normal(0.0, std));
}

template <class S>
void xavier_uniform_init(Tensor<S>& w, long fan_in, long fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (long i = 0; i < w.numel(); ++i) w[i] = static_cast<S>(rng.uniform(-a, a));
}

// ---------------------------------------------------------------------------
// Row-wise softmax with the usual max-shift; `backward` maps dL/dp to dL/dz.
// ---------------------------------------------------------------------------

template <class S>
void softmax_rows_raw(S* data, long rows, long cols) {
  S* p = data;
  for (long r = 0; r < rows; ++r, p += cols) {
    S m = p[0];
    for (long c = 1; c < cols; ++c) m = std::max(m, p[c]);
    S sum = 0;
    for (long c = 0; c < cols; ++c) {
      p[c] = std::exp(p[c] - m);
      sum += p[c];
    }
    const S inv = S(1) / sum;
    for (long c = 0; c < cols; ++c) p[c] *= inv;
  }
}

template <class S>
void softmax_rows(Tensor<S>& x, long rows, long cols) {
  if (rows * cols != x.numel()) throw std::invalid_argument("softmax_rows: bad row/col count");
  softmax_rows_raw(x.data(), rows, cols);
}

/// dz = p .* (dp - sum(dp .* p)) per row; `probs` is the softmax output.
template <class S>
void softmax_rows_backward(const S* probs, const S* dprobs, S* dz, long rows, long cols) {
  for (long r = 0; r < rows; ++r) {
    const S* p = probs + r * cols;
    const S* dp = dprobs + r * cols;
    S dot = 0;
    for (long c = 0; c < cols; ++c) dot += dp[c] * p[c];
    S* out = dz + r * cols;
    for (long c = 0; c < cols; ++c) out[c] = p[c] * (dp[c] - dot);
  }
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b over rows. Caches its input between forward and
// backward when training.
// ---------------------------------------------------------------------------

template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(long in_features, long out_features, bool bias = true)
      : in_(in_features), out_(out_features), use_bias_(bias),
        weight_({out_features, in_features}), wgrad_({out_features, in_features}) {
    if (bias) {
      bias_ = Tensor<S>({out_features});
      bgrad_ = Tensor<S>({out_features});
    }
  }

  void init(Rng& rng) { xavier_uniform_init(weight_, in_, out_, rng); }

  long in_features() const { return in_; }
  long out_features() const { return out_; }
  Tensor<S>& weight() { return weight_; }
  Tensor<S>& bias() { return bias_; }

  /// x: [rows, in] flattened into any tensor with numel == rows * in.
  Tensor<S> forward(const Tensor<S>& x, long rows, bool training) {
    if (rows * in_ != x.numel())
      throw std::invalid_argument("Linear: input numel " + std::to_string(x.numel()) + " != rows*in " +
                                  std::to_string(rows * in_));
    Tensor<S> y({rows, out_});
    y.mat(rows, out_).noalias() = x.mat(rows, in_) * weight_.mat(out_, in_).transpose();
    if (use_bias_) {
      auto ym = y.mat(rows, out_);
      ym.rowwise() += bias_.mat(1, out_).row(0);
    }
    if (training) {
      in_cache_ = x;
      rows_ = rows;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const long rows = rows_;
    wgrad_.mat(out_, in_).noalias() += dy.mat(rows, out_).transpose() * in_cache_.mat(rows, in_);
    if (use_bias_) bgrad_.mat(1, out_).noalias() += dy.mat(rows, out_).colwise().sum();
    Tensor<S> dx(in_cache_.shape());
    dx.mat(rows, in_).noalias() = dy.mat(rows, out_) * weight_.mat(out_, in_);
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".weight", &weight_, &wgrad_, true});
    if (use_bias_) out.push_back({prefix + ".bias", &bias_, &bgrad_, true});
  }

 private:
  long in_ = 0, out_ = 0;
  bool use_bias_ = true;
  Tensor<S> weight_, wgrad_, bias_, bgrad_;
  Tensor<S> in_cache_;
  long rows_ = 0;
};

// ---------------------------------------------------------------------------
// ReLU with mask cache.
// ---------------------------------------------------------------------------

template <class S>
class Relu {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool training) {
    Tensor<S> y(x.shape());
    if (training) mask_.assign(static_cast<size_t>(x.numel()), 0);
    for (long i = 0; i < x.numel(); ++i) {
      const bool pos = x[i] > S(0);
      y[i] = pos ? x[i] : S(0);
      if (training && pos) mask_[static_cast<size_t>(i)] = 1;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.shape());
    for (long i = 0; i < dy.numel(); ++i) dx[i] = mask_[static_cast<size_t>(i)] ? dy[i] : S(0);
    return dx;
  }

 private:
  std::vector<uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// LayerNorm over the last axis of row-shaped input [rows, C].
// ---------------------------------------------------------------------------

template <class S>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(long channels, S eps = S(1e-5))
      : c_(channels), eps_(eps), gamma_({channels}), beta_({channels}), ggrad_({channels}), bgrad_({channels}) {
    gamma_.fill(S(1));
  }

  Tensor<S> forward(const Tensor<S>& x, long rows, bool training) {
    if (rows * c_ != x.numel()) throw std::invalid_argument("LayerNorm: bad row count");
    Tensor<S> y(x.shape());
    Tensor<S> xhat(x.shape());
    Tensor<S> inv_std({rows});
    for (long r = 0; r < rows; ++r) {
      const S* xr = x.data() + r * c_;
      S mean = 0;
      for (long c = 0; c < c_; ++c) mean += xr[c];
      mean /= static_cast<S>(c_);
      S var = 0;
      for (long c = 0; c < c_; ++c) {
        const S d = xr[c] - mean;
        var += d * d;
      }
      var /= static_cast<S>(c_);
      const S istd = S(1) / std::sqrt(var + eps_);
      inv_std[r] = istd;
      S* xh = xhat.data() + r * c_;
      S* yr = y.data() + r * c_;
      for (long c = 0; c < c_; ++c) {
        xh[c] = (xr[c] - mean) * istd;
        yr[c] = gamma_[c] * xh[c] + beta_[c];
      }
    }
    if (training) {
      xhat_ = std::move(xhat);
      inv_std_ = std::move(inv_std);
      rows_ = rows;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const long rows = rows_;
    Tensor<S> dx(dy.shape());
    for (long r = 0; r < rows; ++r) {
      const S* dyr = dy.data() + r * c_;
      const S* xh = xhat_.data() + r * c_;
      S sum_dy = 0, sum_dyx = 0;
      for (long c = 0; c < c_; ++c) {
        const S g = dyr[c] * gamma_[c];
        sum_dy += g;
        sum_dyx += g * xh[c];
        ggrad_[c] += dyr[c] * xh[c];
        bgrad_[c] += dyr[c];
      }
      const S istd = inv_std_[r];
      const S inv_c = S(1) / static_cast<S>(c_);
      S* dxr = dx.data() + r * c_;
      for (long c = 0; c < c_; ++c) {
        const S g = dyr[c] * gamma_[c];
        dxr[c] = istd * (g - inv_c * sum_dy - xh[c] * inv_c * sum_dyx);
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".gamma", &gamma_, &ggrad_, true});
    out.push_back({prefix + ".beta", &beta_, &bgrad_, true});
  }

 private:
  long c_ = 0;
  S eps_ = S(1e-5);
  Tensor<S> gamma_, beta_, ggrad_, bgrad_;
  Tensor<S> xhat_, inv_std_;
  long rows_ = 0;
};

// ---------------------------------------------------------------------------
// Conv2d over a batch of frames [F, Cin, H, W], weight [Cout, Cin*k*k].
// Implemented as per-frame im2col + GEMM; backward recomputes the column
// buffer instead of caching it.
// ---------------------------------------------------------------------------

template <class S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(long in_ch, long out_ch, int ksize, int stride, int pad)
      : cin_(in_ch), cout_(out_ch), k_(ksize), stride_(stride), pad_(pad),
        weight_({out_ch, in_ch * ksize * ksize}), wgrad_({out_ch, in_ch * ksize * ksize}),
        bias_({out_ch}), bgrad_({out_ch}) {}

  void init(Rng& rng) { he_normal_init(weight_, cin_ * k_ * k_, rng); }

  long out_size(long in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    check_axis(x.ndim(), 4, "Conv2d", "ndim");
    check_axis(x.dim(1), cin_, "Conv2d", "channels");
    const long f = x.dim(0), h = x.dim(2), w = x.dim(3);
    const long ho = out_size(h), wo = out_size(w);
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("Conv2d: input spatial size too small");
    Tensor<S> y({f, cout_, ho, wo});
    Tensor<S> cols({cin_ * k_ * k_, ho * wo});
    auto wm = weight_.mat(cout_, cin_ * k_ * k_);
    for (long fi = 0; fi < f; ++fi) {
      im2col(x.data() + fi * cin_ * h * w, h, w, cols);
      Eigen::Map<typename Tensor<S>::RowMat> ym(y.data() + fi * cout_ * ho * wo, cout_, ho * wo);
      ym.noalias() = wm * cols.mat(cin_ * k_ * k_, ho * wo);
      S* yp = y.data() + fi * cout_ * ho * wo;
      for (long c = 0; c < cout_; ++c) {
        const S b = bias_[c];
        for (long i = 0; i < ho * wo; ++i) yp[c * ho * wo + i] += b;
      }
    }
    if (training) in_cache_ = x;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = in_cache_;
    const long f = x.dim(0), h = x.dim(2), w = x.dim(3);
    const long ho = dy.dim(2), wo = dy.dim(3);
    Tensor<S> dx(x.shape());
    Tensor<S> cols({cin_ * k_ * k_, ho * wo});
    Tensor<S> dcols({cin_ * k_ * k_, ho * wo});
    auto wm = weight_.mat(cout_, cin_ * k_ * k_);
    auto wg = wgrad_.mat(cout_, cin_ * k_ * k_);
    for (long fi = 0; fi < f; ++fi) {
      Eigen::Map<const typename Tensor<S>::RowMat> dym(dy.data() + fi * cout_ * ho * wo, cout_, ho * wo);
      im2col(x.data() + fi * cin_ * h * w, h, w, cols);
      wg.noalias() += dym * cols.mat(cin_ * k_ * k_, ho * wo).transpose();
      dcols.mat(cin_ * k_ * k_, ho * wo).noalias() = wm.transpose() * dym;
      col2im(dcols, h, w, dx.data() + fi * cin_ * h * w);
      const S* dyp = dy.data() + fi * cout_ * ho * wo;
      for (long c = 0; c < cout_; ++c) {
        S acc = 0;
        for (long i = 0; i < ho * wo; ++i) acc += dyp[c * ho * wo + i];
        bgrad_[c] += acc;
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".weight", &weight_, &wgrad_, true});
    out.push_back({prefix + ".bias", &bias_, &bgrad_, true});
  }

 private:
  void im2col(const S* img, long h, long w, Tensor<S>& cols) const {
    const long ho = out_size(h), wo = out_size(w);
    S* cp = cols.data();
    for (long c = 0; c < cin_; ++c) {
      const S* plane = img + c * h * w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          for (long oy = 0; oy < ho; ++oy) {
            const long iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) {
              for (long ox = 0; ox < wo; ++ox) *cp++ = S(0);
              continue;
            }
            const S* row = plane + iy * w;
            for (long ox = 0; ox < wo; ++ox) {
              const long ix = ox * stride_ - pad_ + kx;
              *cp++ = (ix < 0 || ix >= w) ? S(0) : row[ix];
            }
          }
        }
      }
    }
  }

  void col2im(const Tensor<S>& cols, long h, long w, S* img) const {
    const long ho = out_size(h), wo = out_size(w);
    const S* cp = cols.data();
    for (long c = 0; c < cin_; ++c) {
      S* plane = img + c * h * w;
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          for (long oy = 0; oy < ho; ++oy) {
            const long iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) {
              cp += wo;
              continue;
            }
            S* row = plane + iy * w;
            for (long ox = 0; ox < wo; ++ox) {
              const long ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) row[ix] += cp[ox];
            }
            cp += wo;
          }
        }
      }
    }
  }

  long cin_ = 0, cout_ = 0;
  int k_ = 3, stride_ = 1, pad_ = 1;
  Tensor<S> weight_, wgrad_, bias_, bgrad_;
  Tensor<S> in_cache_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d over frames [F, C, H, W]: batch statistics while training,
// running statistics at eval.
// ---------------------------------------------------------------------------

template <class S>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(long channels, S momentum = S(0.1), S eps = S(1e-5))
      : c_(channels), momentum_(momentum), eps_(eps), gamma_({channels}), beta_({channels}),
        ggrad_({channels}), bgrad_({channels}), running_mean_({channels}), running_var_({channels}) {
    gamma_.fill(S(1));
    running_var_.fill(S(1));
  }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    check_axis(x.ndim(), 4, "BatchNorm2d", "ndim");
    check_axis(x.dim(1), c_, "BatchNorm2d", "channels");
    const long f = x.dim(0), h = x.dim(2), w = x.dim(3);
    const long hw = h * w, m = f * hw;
    Tensor<S> y(x.shape());
    if (training) {
      Tensor<S> mean({c_}), inv_std({c_});
      for (long c = 0; c < c_; ++c) {
        S sum = 0;
        for (long fi = 0; fi < f; ++fi) {
          const S* p = x.data() + (fi * c_ + c) * hw;
          for (long i = 0; i < hw; ++i) sum += p[i];
        }
        mean[c] = sum / static_cast<S>(m);
      }
      Tensor<S> xhat(x.shape());
      for (long c = 0; c < c_; ++c) {
        S var = 0;
        for (long fi = 0; fi < f; ++fi) {
          const S* p = x.data() + (fi * c_ + c) * hw;
          for (long i = 0; i < hw; ++i) {
            const S d = p[i] - mean[c];
            var += d * d;
          }
        }
        var /= static_cast<S>(m);
        inv_std[c] = S(1) / std::sqrt(var + eps_);
        running_mean_[c] = (S(1) - momentum_) * running_mean_[c] + momentum_ * mean[c];
        running_var_[c] = (S(1) - momentum_) * running_var_[c] + momentum_ * var;
        for (long fi = 0; fi < f; ++fi) {
          const S* p = x.data() + (fi * c_ + c) * hw;
          S* xh = xhat.data() + (fi * c_ + c) * hw;
          S* yo = y.data() + (fi * c_ + c) * hw;
          for (long i = 0; i < hw; ++i) {
            xh[i] = (p[i] - mean[c]) * inv_std[c];
            yo[i] = gamma_[c] * xh[i] + beta_[c];
          }
        }
      }
      xhat_ = std::move(xhat);
      inv_std_ = std::move(inv_std);
      m_ = m;
    } else {
      for (long c = 0; c < c_; ++c) {
        const S istd = S(1) / std::sqrt(running_var_[c] + eps_);
        const S g = gamma_[c] * istd, b = beta_[c] - gamma_[c] * running_mean_[c] * istd;
        for (long fi = 0; fi < f; ++fi) {
          const S* p = x.data() + (fi * c_ + c) * hw;
          S* yo = y.data() + (fi * c_ + c) * hw;
          for (long i = 0; i < hw; ++i) yo[i] = g * p[i] + b;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const long f = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
    Tensor<S> dx(dy.shape());
    for (long c = 0; c < c_; ++c) {
      S sum_dy = 0, sum_dyx = 0;
      for (long fi = 0; fi < f; ++fi) {
        const S* dyp = dy.data() + (fi * c_ + c) * hw;
        const S* xh = xhat_.data() + (fi * c_ + c) * hw;
        for (long i = 0; i < hw; ++i) {
          sum_dy += dyp[i];
          sum_dyx += dyp[i] * xh[i];
        }
      }
      ggrad_[c] += sum_dyx;
      bgrad_[c] += sum_dy;
      const S istd = inv_std_[c];
      const S inv_m = S(1) / static_cast<S>(m_);
      const S g = gamma_[c];
      for (long fi = 0; fi < f; ++fi) {
        const S* dyp = dy.data() + (fi * c_ + c) * hw;
        const S* xh = xhat_.data() + (fi * c_ + c) * hw;
        S* dxp = dx.data() + (fi * c_ + c) * hw;
        for (long i = 0; i < hw; ++i)
          dxp[i] = g * istd * (dyp[i] - inv_m * sum_dy - xh[i] * inv_m * sum_dyx);
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<S>>& out) {
    out.push_back({prefix + ".gamma", &gamma_, &ggrad_, true});
    out.push_back({prefix + ".beta", &beta_, &bgrad_, true});
    out.push_back({prefix + ".running_mean", &running_mean_, nullptr, false});
    out.push_back({prefix + ".running_var", &running_var_, nullptr, false});
  }

 private:
  long c_ = 0;
  S momentum_ = S(0.1), eps_ = S(1e-5);
  Tensor<S> gamma_, beta_, ggrad_, bgrad_, running_mean_, running_var_;
  Tensor<S> xhat_, inv_std_;
  long m_ = 0;
};

}  // namespace nn
}  // namespace licaf
