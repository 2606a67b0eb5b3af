#pragma once

#include "licaf/backbone.hpp"
#include "licaf/nn.hpp"
#include "licaf/strategy.hpp"

#include <string>
#include <utility>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Channel descriptor extractor: temporal max, spatial mean, linear map,
// rectifier. [N, C, T, H, W] -> [N, C].
// ---------------------------------------------------------------------------

template <class S>
class Gamma {
 public:
  Gamma() = default;
  explicit Gamma(long channels) : c_(channels), fc_(channels, channels) {}

  Tensor<S> forward(const Tensor<S>& fm, bool training) {
    check_axis(fm.ndim(), 5, "gamma", "ndim");
    check_axis(fm.dim(1), c_, "gamma", "channels");
    const long n = fm.dim(0), t = fm.dim(2), h = fm.dim(3), w = fm.dim(4);
    const long hw = h * w;
    Tensor<S> pooled({n, c_});
    Tensor<long> argmax_t;
    if (training) argmax_t = Tensor<long>({n, c_, h, w});
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c_; ++ci) {
        const S* base = fm.data() + (ni * c_ + ci) * t * hw;
        S sum = 0;
        for (long i = 0; i < hw; ++i) {
          S best = base[i];
          long best_t = 0;
          for (long ti = 1; ti < t; ++ti) {
            const S v = base[ti * hw + i];
            if (v > best) {
              best = v;
              best_t = ti;
            }
          }
          sum += best;
          if (training) argmax_t[(ni * c_ + ci) * hw + i] = best_t;
        }
        pooled.at(ni, ci) = sum / static_cast<S>(hw);
      }
    if (training) {
      argmax_t_ = std::move(argmax_t);
      in_shape_ = fm.shape();
    }
    return relu_.forward(fc_.forward(pooled, n, training), training);
  }

  Tensor<S> backward(const Tensor<S>& ddesc) {
    Tensor<S> dpooled = fc_.backward(relu_.backward(ddesc));
    const long n = in_shape_[0], t = in_shape_[2], h = in_shape_[3], w = in_shape_[4];
    const long hw = h * w;
    Tensor<S> dfm(in_shape_);
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c_; ++ci) {
        const S d = dpooled.at(ni, ci) / static_cast<S>(hw);
        S* base = dfm.data() + (ni * c_ + ci) * t * hw;
        const long* am = argmax_t_.data() + (ni * c_ + ci) * hw;
        for (long i = 0; i < hw; ++i) base[am[i] * hw + i] += d;
      }
    return dfm;
  }

  void init(Rng& rng) { fc_.init(rng); }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) { fc_.collect(prefix + ".fc", out); }

  nn::Linear<S>& fc() { return fc_; }

 private:
  long c_ = 0;
  nn::Linear<S> fc_;
  nn::Relu<S> relu_;
  Tensor<long> argmax_t_;
  std::vector<long> in_shape_;
};

// ---------------------------------------------------------------------------
// Cross-modal channel attention. Per sample the two descriptors form a CxC
// affinity map (rows sum to 1 after the softmax); the map recombines the
// channels of the target feature map.
// ---------------------------------------------------------------------------

template <class S>
struct ChanAttnGrads {
  Tensor<S> dguide, dtarget_desc, dtarget_fm;
};

template <class S>
class ChannelAttention {
 public:
  /// guide, target_desc: [N, C]; target_fm: [N, C, ...] -> same shape as fm.
  Tensor<S> forward(const Tensor<S>& guide, const Tensor<S>& target_desc, const Tensor<S>& target_fm,
                    bool training) {
    check_axis(guide.ndim(), 2, "channel_attention", "guide ndim");
    if (!guide.same_shape(target_desc))
      throw std::invalid_argument("channel_attention: descriptor shapes differ, " + guide.shape_string() + " vs " +
                                  target_desc.shape_string());
    const long n = guide.dim(0), c = guide.dim(1);
    check_axis(target_fm.dim(0), n, "channel_attention", "N");
    check_axis(target_fm.dim(1), c, "channel_attention", "channels");
    const long m = target_fm.numel() / (n * c);
    Tensor<S> probs({n, c, c});
    Tensor<S> out(target_fm.shape());
    for (long ni = 0; ni < n; ++ni) {
      S* a = probs.data() + ni * c * c;
      const S* g = guide.data() + ni * c;
      const S* d = target_desc.data() + ni * c;
      for (long i = 0; i < c; ++i)
        for (long j = 0; j < c; ++j) a[i * c + j] = g[i] * d[j];
      nn::softmax_rows_raw(a, c, c);
      Eigen::Map<const typename Tensor<S>::RowMat> am(a, c, c);
      Eigen::Map<const typename Tensor<S>::RowMat> fm(target_fm.data() + ni * c * m, c, m);
      Eigen::Map<typename Tensor<S>::RowMat> om(out.data() + ni * c * m, c, m);
      om.noalias() = am * fm;
    }
    if (training) {
      probs_ = probs;
      guide_ = guide;
      tdesc_ = target_desc;
      tfm_ = target_fm;
    }
    return out;
  }

  ChanAttnGrads<S> backward(const Tensor<S>& dout) {
    const long n = guide_.dim(0), c = guide_.dim(1);
    const long m = tfm_.numel() / (n * c);
    ChanAttnGrads<S> g;
    g.dguide = Tensor<S>({n, c});
    g.dtarget_desc = Tensor<S>({n, c});
    g.dtarget_fm = Tensor<S>(tfm_.shape());
    Tensor<S> dprobs({c, c}), dlogits({c, c});
    for (long ni = 0; ni < n; ++ni) {
      const S* a = probs_.data() + ni * c * c;
      Eigen::Map<const typename Tensor<S>::RowMat> am(a, c, c);
      Eigen::Map<const typename Tensor<S>::RowMat> dom(dout.data() + ni * c * m, c, m);
      Eigen::Map<const typename Tensor<S>::RowMat> fm(tfm_.data() + ni * c * m, c, m);
      Eigen::Map<typename Tensor<S>::RowMat> dfm(g.dtarget_fm.data() + ni * c * m, c, m);
      dfm.noalias() = am.transpose() * dom;
      dprobs.mat(c, c).noalias() = dom * fm.transpose();
      nn::softmax_rows_backward(a, dprobs.data(), dlogits.data(), c, c);
      const S* gd = guide_.data() + ni * c;
      const S* td = tdesc_.data() + ni * c;
      S* dg = g.dguide.data() + ni * c;
      S* dd = g.dtarget_desc.data() + ni * c;
      for (long i = 0; i < c; ++i)
        for (long j = 0; j < c; ++j) {
          const S dl = dlogits[i * c + j];
          dg[i] += dl * td[j];
          dd[j] += dl * gd[i];
        }
    }
    return g;
  }

  const Tensor<S>& probs() const { return probs_; }

 private:
  Tensor<S> probs_, guide_, tdesc_, tfm_;
};

/// One-shot form of the attention op (no cache).
template <class S>
Tensor<S> channel_attention(const Tensor<S>& guide, const Tensor<S>& target_desc, const Tensor<S>& target_fm) {
  ChannelAttention<S> op;
  return op.forward(guide, target_desc, target_fm, false);
}

// ---------------------------------------------------------------------------
// The ACCA module: four descriptor extractors (guide and target role for each
// of the two enhanced outputs), two attention ops, and the learnable blend
// weights. The strategy fixes which output is computed first and whether the
// second step is guided by the first step's output.
// ---------------------------------------------------------------------------

template <class S>
struct AccaGrads {
  Tensor<S> d_fl, d_fc;
};

template <class S>
class Acca {
 public:
  Acca() = default;
  Acca(long channels, Strategy strategy)
      : c_(channels), strategy_(strategy), gamma_l_guide_(channels), gamma_l_target_(channels),
        gamma_c_guide_(channels), gamma_c_target_(channels), alpha_({1}), beta_({1}), alpha_grad_({1}),
        beta_grad_({1}) {
    alpha_.fill(S(1));
    beta_.fill(S(1));
  }

  Strategy strategy() const { return strategy_; }
  Tensor<S>& alpha() { return alpha_; }
  Tensor<S>& beta() { return beta_; }
  Tensor<S>& alpha_grad() { return alpha_grad_; }
  Tensor<S>& beta_grad() { return beta_grad_; }

  /// f_l, f_c: [N, C, T, H, W] with possibly different T. Returns (E_L, E_C).
  std::pair<Tensor<S>, Tensor<S>> forward(const Tensor<S>& f_l, const Tensor<S>& f_c, bool training) {
    check_axis(f_l.dim(1), c_, "acca", "lidar channels");
    check_axis(f_c.dim(1), c_, "acca", "camera channels");
    Tensor<S> e_l, e_c;
    switch (strategy_) {
      case Strategy::kLcThenCl: {
        e_l = attend_l_(f_c, f_l, training);
        e_c = attend_c_(e_l, f_c, training);
        break;
      }
      case Strategy::kClThenLc: {
        e_c = attend_c_(f_l, f_c, training);
        e_l = attend_l_(e_c, f_l, training);
        break;
      }
      case Strategy::kSimultaneous: {
        e_l = attend_l_(f_c, f_l, training);
        e_c = attend_c_(f_l, f_c, training);
        break;
      }
      case Strategy::kLcOnly: {
        e_l = attend_l_(f_c, f_l, training);
        e_c = f_c;
        break;
      }
      case Strategy::kClOnly: {
        e_c = attend_c_(f_l, f_c, training);
        e_l = f_l;
        break;
      }
    }
    return {std::move(e_l), std::move(e_c)};
  }

  /// Gradients w.r.t. the raw feature maps, given gradients of (E_L, E_C).
  AccaGrads<S> backward(const Tensor<S>& de_l, const Tensor<S>& de_c) {
    AccaGrads<S> g;
    switch (strategy_) {
      case Strategy::kLcThenCl: {
        auto [dguide_c, d_fc_target, d_fc_val] = backprop_c_(de_c);
        Tensor<S> de_l_total = de_l;
        add_(de_l_total, dguide_c);
        auto [dguide_l, d_fl_target, d_fl_val] = backprop_l_(de_l_total);
        g.d_fl = std::move(d_fl_val);
        add_(g.d_fl, d_fl_target);
        g.d_fc = std::move(d_fc_val);
        add_(g.d_fc, d_fc_target);
        add_(g.d_fc, dguide_l);
        break;
      }
      case Strategy::kClThenLc: {
        auto [dguide_l, d_fl_target, d_fl_val] = backprop_l_(de_l);
        Tensor<S> de_c_total = de_c;
        add_(de_c_total, dguide_l);
        auto [dguide_c, d_fc_target, d_fc_val] = backprop_c_(de_c_total);
        g.d_fc = std::move(d_fc_val);
        add_(g.d_fc, d_fc_target);
        g.d_fl = std::move(d_fl_val);
        add_(g.d_fl, d_fl_target);
        add_(g.d_fl, dguide_c);
        break;
      }
      case Strategy::kSimultaneous: {
        auto [dguide_l, d_fl_target, d_fl_val] = backprop_l_(de_l);
        auto [dguide_c, d_fc_target, d_fc_val] = backprop_c_(de_c);
        g.d_fl = std::move(d_fl_val);
        add_(g.d_fl, d_fl_target);
        add_(g.d_fl, dguide_c);
        g.d_fc = std::move(d_fc_val);
        add_(g.d_fc, d_fc_target);
        add_(g.d_fc, dguide_l);
        break;
      }
      case Strategy::kLcOnly: {
        auto [dguide_l, d_fl_target, d_fl_val] = backprop_l_(de_l);
        g.d_fl = std::move(d_fl_val);
        add_(g.d_fl, d_fl_target);
        g.d_fc = de_c;
        add_(g.d_fc, dguide_l);
        break;
      }
      case Strategy::kClOnly: {
        auto [dguide_c, d_fc_target, d_fc_val] = backprop_c_(de_c);
        g.d_fc = std::move(d_fc_val);
        add_(g.d_fc, d_fc_target);
        g.d_fl = de_l;
        add_(g.d_fl, dguide_c);
        break;
      }
    }
    return g;
  }

  void init(Rng& rng) {
    gamma_l_guide_.init(rng);
    gamma_l_target_.init(rng);
    gamma_c_guide_.init(rng);
    gamma_c_target_.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    const bool uses_l = strategy_ != Strategy::kClOnly;
    const bool uses_c = strategy_ != Strategy::kLcOnly;
    if (uses_l) {
      gamma_l_guide_.collect(prefix + ".gamma_l_guide", out);
      gamma_l_target_.collect(prefix + ".gamma_l_target", out);
    }
    if (uses_c) {
      gamma_c_guide_.collect(prefix + ".gamma_c_guide", out);
      gamma_c_target_.collect(prefix + ".gamma_c_target", out);
    }
    out.push_back({prefix + ".alpha", &alpha_, &alpha_grad_, true});
    out.push_back({prefix + ".beta", &beta_, &beta_grad_, true});
  }

 private:
  // E_L = CA(Gamma(guide_src), Gamma(F_L), F_L).
  Tensor<S> attend_l_(const Tensor<S>& guide_src, const Tensor<S>& f_l, bool training) {
    Tensor<S> g = gamma_l_guide_.forward(guide_src, training);
    Tensor<S> d = gamma_l_target_.forward(f_l, training);
    return ca_l_.forward(g, d, f_l, training);
  }
  Tensor<S> attend_c_(const Tensor<S>& guide_src, const Tensor<S>& f_c, bool training) {
    Tensor<S> g = gamma_c_guide_.forward(guide_src, training);
    Tensor<S> d = gamma_c_target_.forward(f_c, training);
    return ca_c_.forward(g, d, f_c, training);
  }

  // Returns (d guide_src, d target from the descriptor path, d target from
  // the value path).
  std::tuple<Tensor<S>, Tensor<S>, Tensor<S>> backprop_l_(const Tensor<S>& de_l) {
    ChanAttnGrads<S> ca = ca_l_.backward(de_l);
    Tensor<S> dguide_src = gamma_l_guide_.backward(ca.dguide);
    Tensor<S> dtarget = gamma_l_target_.backward(ca.dtarget_desc);
    return {std::move(dguide_src), std::move(dtarget), std::move(ca.dtarget_fm)};
  }
  std::tuple<Tensor<S>, Tensor<S>, Tensor<S>> backprop_c_(const Tensor<S>& de_c) {
    ChanAttnGrads<S> ca = ca_c_.backward(de_c);
    Tensor<S> dguide_src = gamma_c_guide_.backward(ca.dguide);
    Tensor<S> dtarget = gamma_c_target_.backward(ca.dtarget_desc);
    return {std::move(dguide_src), std::move(dtarget), std::move(ca.dtarget_fm)};
  }

  static void add_(Tensor<S>& into, const Tensor<S>& from) {
    for (long i = 0; i < into.numel(); ++i) into[i] += from[i];
  }

  long c_ = 0;
  Strategy strategy_ = kAccaDefaultStrategy;
  Gamma<S> gamma_l_guide_, gamma_l_target_, gamma_c_guide_, gamma_c_target_;
  ChannelAttention<S> ca_l_, ca_c_;
  Tensor<S> alpha_, beta_, alpha_grad_, beta_grad_;
};

// ---------------------------------------------------------------------------
// Blend the raw and enhanced feature maps with a learnable scalar weight on
// the raw map, then pool: hpp(weight * F + E).
// ---------------------------------------------------------------------------

template <class S>
class BlendPool {
 public:
  BlendPool() : hpp_(kDefaultHppBins) {}
  explicit BlendPool(std::vector<long> bins) : hpp_(std::move(bins)) {}

  long parts() const { return hpp_.parts(); }

  Tensor<S> forward(const Tensor<S>& f, const Tensor<S>& e, const Tensor<S>& weight, bool training) {
    if (!f.same_shape(e))
      throw std::invalid_argument("blend_and_pool: shape mismatch " + f.shape_string() + " vs " + e.shape_string());
    const S w = weight[0];
    Tensor<S> z(f.shape());
    for (long i = 0; i < f.numel(); ++i) z[i] = w * f[i] + e[i];
    if (training) f_cache_ = f;
    return hpp_.forward(z, training);
  }

  /// Returns (dF, dE); the weight gradient is accumulated into wgrad[0].
  std::pair<Tensor<S>, Tensor<S>> backward(const Tensor<S>& ds, const Tensor<S>& weight, Tensor<S>& wgrad) {
    Tensor<S> dz = hpp_.backward(ds);
    const S w = weight[0];
    Tensor<S> df(dz.shape());
    S dw = 0;
    for (long i = 0; i < dz.numel(); ++i) {
      df[i] = w * dz[i];
      dw += dz[i] * f_cache_[i];
    }
    wgrad[0] += dw;
    return {std::move(df), std::move(dz)};
  }

 private:
  HppOp<S> hpp_;
  Tensor<S> f_cache_;
};

/// One-shot blend-and-pool over fresh state; handy for tests and examples.
template <class S>
Tensor<S> blend_and_pool(const Tensor<S>& f, const Tensor<S>& e, S weight,
                         const std::vector<long>& bins = kDefaultHppBins) {
  BlendPool<S> op(bins);
  Tensor<S> w({1});
  w.fill(weight);
  return op.forward(f, e, w, false);
}

}  // namespace licaf
