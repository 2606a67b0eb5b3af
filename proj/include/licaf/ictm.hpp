#pragma once

#include "licaf/nn.hpp"
#include "licaf/strategy.hpp"

#include <string>
#include <utility>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Layout helpers. Token sequences are stored [N, C, T, P]; attention and the
// pointwise blocks work on a row matrix [(N*P*T), C] with row index
// ((n*P + p)*T + t), so each (n, p) slice is a contiguous [T, C] block.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> seq_to_rows(const Tensor<S>& x) {
  const long n = x.dim(0), c = x.dim(1), t = x.dim(2), p = x.dim(3);
  Tensor<S> rows({n * p * t, c});
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci) {
      const S* src = x.data() + (ni * c + ci) * t * p;
      for (long ti = 0; ti < t; ++ti)
        for (long pi = 0; pi < p; ++pi) rows[(((ni * p + pi) * t + ti)) * c + ci] = src[ti * p + pi];
    }
  return rows;
}

template <class S>
Tensor<S> rows_to_seq(const Tensor<S>& rows, long n, long c, long t, long p) {
  Tensor<S> x({n, c, t, p});
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci) {
      S* dst = x.data() + (ni * c + ci) * t * p;
      for (long ti = 0; ti < t; ++ti)
        for (long pi = 0; pi < p; ++pi) dst[ti * p + pi] = rows[(((ni * p + pi) * t + ti)) * c + ci];
    }
  return x;
}

// ---------------------------------------------------------------------------
// Class token attachment: prepend one learned C-vector at time index 0,
// broadcast over samples and parts.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> attach_class_token(const Tensor<S>& seq, const Tensor<S>& token) {
  const long n = seq.dim(0), c = seq.dim(1), t = seq.dim(2), p = seq.dim(3);
  check_axis(token.numel(), c, "attach_class_tokens", "token channels");
  Tensor<S> out({n, c, t + 1, p});
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci) {
      S* dst = out.data() + (ni * c + ci) * (t + 1) * p;
      for (long pi = 0; pi < p; ++pi) dst[pi] = token[ci];
      const S* src = seq.data() + (ni * c + ci) * t * p;
      std::copy(src, src + t * p, dst + p);
    }
  return out;
}

/// Splits the gradient of an attached sequence into the sequence part and the
/// token part (accumulated into dtoken).
template <class S>
Tensor<S> detach_class_token_grad(const Tensor<S>& dseq, Tensor<S>& dtoken) {
  const long n = dseq.dim(0), c = dseq.dim(1), t1 = dseq.dim(2), p = dseq.dim(3);
  Tensor<S> dx({n, c, t1 - 1, p});
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci) {
      const S* src = dseq.data() + (ni * c + ci) * t1 * p;
      for (long pi = 0; pi < p; ++pi) dtoken[ci] += src[pi];
      S* dst = dx.data() + (ni * c + ci) * (t1 - 1) * p;
      std::copy(src + p, src + t1 * p, dst);
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Multi-head cross-attention along the time axis, independently per part.
// Scores QK^T/sqrt(d_head) are softmaxed over key positions; there is no
// positional encoding, so the op is invariant to joint permutations of the
// key/value time axis.
// ---------------------------------------------------------------------------

template <class S>
struct MhaGrads {
  Tensor<S> dq, dk, dv;
};

template <class S>
class Mha {
 public:
  Mha() = default;
  Mha(long channels, long heads) : c_(channels), h_(heads) {
    if (heads <= 0 || channels % heads != 0)
      throw std::invalid_argument("cross_attention: channels " + std::to_string(channels) +
                                  " not divisible by heads " + std::to_string(heads));
    d_ = channels / heads;
    wq_ = nn::Linear<S>(channels, channels);
    wk_ = nn::Linear<S>(channels, channels);
    wv_ = nn::Linear<S>(channels, channels);
    wo_ = nn::Linear<S>(channels, channels);
  }

  /// q_seq: [N, C, Tq, P]; k_seq, v_seq: [N, C, Tk, P]. Output [N, C, Tq, P].
  Tensor<S> forward(const Tensor<S>& q_seq, const Tensor<S>& k_seq, const Tensor<S>& v_seq, bool training) {
    check_axis(q_seq.dim(1), c_, "cross_attention", "query channels");
    check_axis(k_seq.dim(1), c_, "cross_attention", "key channels");
    check_axis(v_seq.dim(1), c_, "cross_attention", "value channels");
    check_axis(v_seq.dim(2), k_seq.dim(2), "cross_attention", "key/value time");
    check_axis(k_seq.dim(0), q_seq.dim(0), "cross_attention", "batch");
    check_axis(k_seq.dim(3), q_seq.dim(3), "cross_attention", "parts");
    n_ = q_seq.dim(0);
    p_ = q_seq.dim(3);
    tq_ = q_seq.dim(2);
    tk_ = k_seq.dim(2);
    const long rq = n_ * p_ * tq_, rk = n_ * p_ * tk_;
    Tensor<S> q = wq_.forward(seq_to_rows(q_seq), rq, training);
    Tensor<S> k = wk_.forward(seq_to_rows(k_seq), rk, training);
    Tensor<S> v = wv_.forward(seq_to_rows(v_seq), rk, training);
    Tensor<S> probs({n_ * p_, h_, tq_, tk_});
    Tensor<S> ctx({rq, c_});
    const S scale = S(1) / std::sqrt(static_cast<S>(d_));
    auto qm = q.mat(rq, c_);
    auto km = k.mat(rk, c_);
    auto vm = v.mat(rk, c_);
    auto cm = ctx.mat(rq, c_);
    for (long np = 0; np < n_ * p_; ++np) {
      for (long hh = 0; hh < h_; ++hh) {
        S* pr = probs.data() + (np * h_ + hh) * tq_ * tk_;
        Eigen::Map<typename Tensor<S>::RowMat> pm(pr, tq_, tk_);
        pm.noalias() = qm.block(np * tq_, hh * d_, tq_, d_) * km.block(np * tk_, hh * d_, tk_, d_).transpose() * scale;
        nn::softmax_rows_raw(pr, tq_, tk_);
        cm.block(np * tq_, hh * d_, tq_, d_).noalias() = pm * vm.block(np * tk_, hh * d_, tk_, d_);
      }
    }
    Tensor<S> out = wo_.forward(ctx, rq, training);
    if (training) {
      q_ = std::move(q);
      k_ = std::move(k);
      v_ = std::move(v);
      probs_ = std::move(probs);
    }
    return rows_to_seq(out, n_, c_, tq_, p_);
  }

  MhaGrads<S> backward(const Tensor<S>& dy) {
    const long rq = n_ * p_ * tq_, rk = n_ * p_ * tk_;
    Tensor<S> dctx = wo_.backward(seq_to_rows(dy));
    Tensor<S> dq({rq, c_}), dk({rk, c_}), dv({rk, c_});
    Tensor<S> dprobs({tq_, tk_}), dscores({tq_, tk_});
    const S scale = S(1) / std::sqrt(static_cast<S>(d_));
    auto qm = q_.mat(rq, c_);
    auto km = k_.mat(rk, c_);
    auto vm = v_.mat(rk, c_);
    auto dqm = dq.mat(rq, c_);
    auto dkm = dk.mat(rk, c_);
    auto dvm = dv.mat(rk, c_);
    auto dcm = dctx.mat(rq, c_);
    for (long np = 0; np < n_ * p_; ++np) {
      for (long hh = 0; hh < h_; ++hh) {
        const S* pr = probs_.data() + (np * h_ + hh) * tq_ * tk_;
        Eigen::Map<const typename Tensor<S>::RowMat> pm(pr, tq_, tk_);
        dprobs.mat(tq_, tk_).noalias() =
            dcm.block(np * tq_, hh * d_, tq_, d_) * vm.block(np * tk_, hh * d_, tk_, d_).transpose();
        dvm.block(np * tk_, hh * d_, tk_, d_).noalias() += pm.transpose() * dcm.block(np * tq_, hh * d_, tq_, d_);
        nn::softmax_rows_backward(pr, dprobs.data(), dscores.data(), tq_, tk_);
        dqm.block(np * tq_, hh * d_, tq_, d_).noalias() +=
            dscores.mat(tq_, tk_) * km.block(np * tk_, hh * d_, tk_, d_) * scale;
        dkm.block(np * tk_, hh * d_, tk_, d_).noalias() +=
            dscores.mat(tq_, tk_).transpose() * qm.block(np * tq_, hh * d_, tq_, d_) * scale;
      }
    }
    MhaGrads<S> g;
    g.dq = rows_to_seq(wq_.backward(dq), n_, c_, tq_, p_);
    g.dk = rows_to_seq(wk_.backward(dk), n_, c_, tk_, p_);
    g.dv = rows_to_seq(wv_.backward(dv), n_, c_, tk_, p_);
    return g;
  }

  void init(Rng& rng) {
    wq_.init(rng);
    wk_.init(rng);
    wv_.init(rng);
    wo_.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    wq_.collect(prefix + ".wq", out);
    wk_.collect(prefix + ".wk", out);
    wv_.collect(prefix + ".wv", out);
    wo_.collect(prefix + ".wo", out);
  }

 private:
  long c_ = 0, h_ = 1, d_ = 0;
  nn::Linear<S> wq_, wk_, wv_, wo_;
  Tensor<S> q_, k_, v_, probs_;
  long n_ = 0, p_ = 0, tq_ = 0, tk_ = 0;
};

/// One-shot cross-attention with the given projection layers already inside
/// `mha`; convenience for tests.
template <class S>
Tensor<S> cross_attention(Mha<S>& mha, const Tensor<S>& q_seq, const Tensor<S>& k_seq, const Tensor<S>& v_seq) {
  return mha.forward(q_seq, k_seq, v_seq, false);
}

// ---------------------------------------------------------------------------
// Pre-norm residual wrappers. The attention block normalizes both incoming
// streams, attends, and adds the (unnormalized) query stream back; the FFN
// block is the standard token-wise two-layer net.
// ---------------------------------------------------------------------------

template <class S>
class CattBlock {
 public:
  CattBlock() = default;
  CattBlock(long channels, long heads) : c_(channels), ln_q_(channels), ln_kv_(channels), mha_(channels, heads) {}

  /// Output shape equals the query stream's shape; the residual comes from
  /// the query stream.
  Tensor<S> forward(const Tensor<S>& q_stream, const Tensor<S>& kv_stream, bool training) {
    Tensor<S> qn = ln_fwd_(ln_q_, q_stream, training);
    Tensor<S> kvn = ln_fwd_(ln_kv_, kv_stream, training);
    Tensor<S> y = mha_.forward(qn, kvn, kvn, training);
    for (long i = 0; i < y.numel(); ++i) y[i] += q_stream[i];
    return y;
  }

  /// Returns (d q_stream, d kv_stream).
  std::pair<Tensor<S>, Tensor<S>> backward(const Tensor<S>& dy) {
    MhaGrads<S> g = mha_.backward(dy);
    for (long i = 0; i < g.dk.numel(); ++i) g.dk[i] += g.dv[i];
    Tensor<S> dq = ln_bwd_(ln_q_, g.dq);
    for (long i = 0; i < dq.numel(); ++i) dq[i] += dy[i];
    Tensor<S> dkv = ln_bwd_(ln_kv_, g.dk);
    return {std::move(dq), std::move(dkv)};
  }

  void init(Rng& rng) { mha_.init(rng); }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    ln_q_.collect(prefix + ".ln_q", out);
    ln_kv_.collect(prefix + ".ln_kv", out);
    mha_.collect(prefix + ".mha", out);
  }

 private:
  Tensor<S> ln_fwd_(nn::LayerNorm<S>& ln, const Tensor<S>& x, bool training) {
    const long rows = x.numel() / c_;
    return rows_to_seq(ln.forward(seq_to_rows(x), rows, training), x.dim(0), c_, x.dim(2), x.dim(3));
  }
  Tensor<S> ln_bwd_(nn::LayerNorm<S>& ln, const Tensor<S>& dy) {
    return rows_to_seq(ln.backward(seq_to_rows(dy)), dy.dim(0), c_, dy.dim(2), dy.dim(3));
  }

  long c_ = 0;
  nn::LayerNorm<S> ln_q_, ln_kv_;
  Mha<S> mha_;
};

template <class S>
class FfnBlock {
 public:
  FfnBlock() = default;
  explicit FfnBlock(long channels, long hidden_mult = 4)
      : c_(channels), ln_(channels), fc1_(channels, channels * hidden_mult), fc2_(channels * hidden_mult, channels) {}

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    const long rows = x.numel() / c_;
    Tensor<S> n = ln_.forward(seq_to_rows(x), rows, training);
    Tensor<S> h = relu_.forward(fc1_.forward(n, rows, training), training);
    Tensor<S> o = fc2_.forward(h, rows, training);
    Tensor<S> y = rows_to_seq(o, x.dim(0), c_, x.dim(2), x.dim(3));
    for (long i = 0; i < y.numel(); ++i) y[i] += x[i];
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> do_ = seq_to_rows(dy);
    Tensor<S> dn = fc1_.backward(relu_.backward(fc2_.backward(do_)));
    Tensor<S> dx = rows_to_seq(ln_.backward(dn), dy.dim(0), c_, dy.dim(2), dy.dim(3));
    for (long i = 0; i < dx.numel(); ++i) dx[i] += dy[i];
    return dx;
  }

  void init(Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    ln_.collect(prefix + ".ln", out);
    fc1_.collect(prefix + ".fc1", out);
    fc2_.collect(prefix + ".fc2", out);
  }

 private:
  long c_ = 0;
  nn::LayerNorm<S> ln_;
  nn::Linear<S> fc1_, fc2_;
  nn::Relu<S> relu_;
};

// ---------------------------------------------------------------------------
// One interlaced layer: paired cross-attention blocks plus per-stream FFNs,
// wired by strategy. "Modeling A<-B" runs the block that updates stream A;
// by default the guiding stream B supplies Q and the modeled stream supplies
// K and V (the documented literal convention), so the block output takes the
// guide's time length. q_is_target = true swaps the roles.
// ---------------------------------------------------------------------------

template <class S>
class IctmLayer {
 public:
  IctmLayer() = default;
  IctmLayer(long channels, long heads, Strategy strategy, bool q_is_target)
      : strategy_(strategy), q_is_target_(q_is_target), catt_l_(channels, heads), catt_c_(channels, heads),
        ffn_l_(channels), ffn_c_(channels) {}

  Strategy strategy() const { return strategy_; }

  /// Returns (L stream out, C stream out).
  std::pair<Tensor<S>, Tensor<S>> forward(const Tensor<S>& l_in, const Tensor<S>& c_in, bool training) {
    Tensor<S> l_out, c_out;
    switch (strategy_) {
      case Strategy::kClThenLc: {
        Tensor<S> c_opt = step_(catt_c_, l_in, c_in, training);
        Tensor<S> l_opt = step_(catt_l_, c_opt, l_in, training);
        l_out = ffn_l_.forward(l_opt, training);
        c_out = ffn_c_.forward(c_opt, training);
        break;
      }
      case Strategy::kLcThenCl: {
        Tensor<S> l_opt = step_(catt_l_, c_in, l_in, training);
        Tensor<S> c_opt = step_(catt_c_, l_opt, c_in, training);
        l_out = ffn_l_.forward(l_opt, training);
        c_out = ffn_c_.forward(c_opt, training);
        break;
      }
      case Strategy::kSimultaneous: {
        Tensor<S> c_opt = step_(catt_c_, l_in, c_in, training);
        Tensor<S> l_opt = step_(catt_l_, c_in, l_in, training);
        l_out = ffn_l_.forward(l_opt, training);
        c_out = ffn_c_.forward(c_opt, training);
        break;
      }
      case Strategy::kClOnly: {
        Tensor<S> c_opt = step_(catt_c_, l_in, c_in, training);
        c_out = ffn_c_.forward(c_opt, training);
        l_out = l_in;
        break;
      }
      case Strategy::kLcOnly: {
        Tensor<S> l_opt = step_(catt_l_, c_in, l_in, training);
        l_out = ffn_l_.forward(l_opt, training);
        c_out = c_in;
        break;
      }
    }
    return {std::move(l_out), std::move(c_out)};
  }

  std::pair<Tensor<S>, Tensor<S>> backward(const Tensor<S>& dl_out, const Tensor<S>& dc_out) {
    Tensor<S> dl_in, dc_in;
    switch (strategy_) {
      case Strategy::kClThenLc: {
        Tensor<S> dl_opt = ffn_l_.backward(dl_out);
        Tensor<S> dc_opt = ffn_c_.backward(dc_out);
        auto [dguide_l, dl_in_a] = step_bwd_(catt_l_, dl_opt);
        add_(dc_opt, dguide_l);
        auto [dl_in_b, dc] = step_bwd_(catt_c_, dc_opt);
        dl_in = std::move(dl_in_a);
        add_(dl_in, dl_in_b);
        dc_in = std::move(dc);
        break;
      }
      case Strategy::kLcThenCl: {
        Tensor<S> dl_opt = ffn_l_.backward(dl_out);
        Tensor<S> dc_opt = ffn_c_.backward(dc_out);
        auto [dguide_c, dc_in_a] = step_bwd_(catt_c_, dc_opt);
        add_(dl_opt, dguide_c);
        auto [dc_in_b, dl] = step_bwd_(catt_l_, dl_opt);
        dc_in = std::move(dc_in_a);
        add_(dc_in, dc_in_b);
        dl_in = std::move(dl);
        break;
      }
      case Strategy::kSimultaneous: {
        Tensor<S> dl_opt = ffn_l_.backward(dl_out);
        Tensor<S> dc_opt = ffn_c_.backward(dc_out);
        auto [dl_g, dc_m] = step_bwd_(catt_c_, dc_opt);
        auto [dc_g, dl_m] = step_bwd_(catt_l_, dl_opt);
        dl_in = std::move(dl_m);
        add_(dl_in, dl_g);
        dc_in = std::move(dc_m);
        add_(dc_in, dc_g);
        break;
      }
      case Strategy::kClOnly: {
        Tensor<S> dc_opt = ffn_c_.backward(dc_out);
        auto [dl_g, dc_m] = step_bwd_(catt_c_, dc_opt);
        dl_in = dl_out;
        add_(dl_in, dl_g);
        dc_in = std::move(dc_m);
        break;
      }
      case Strategy::kLcOnly: {
        Tensor<S> dl_opt = ffn_l_.backward(dl_out);
        auto [dc_g, dl_m] = step_bwd_(catt_l_, dl_opt);
        dc_in = dc_out;
        add_(dc_in, dc_g);
        dl_in = std::move(dl_m);
        break;
      }
    }
    return {std::move(dl_in), std::move(dc_in)};
  }

  void init(Rng& rng) {
    if (strategy_ != Strategy::kClOnly) {
      catt_l_.init(rng);
      ffn_l_.init(rng);
    }
    if (strategy_ != Strategy::kLcOnly) {
      catt_c_.init(rng);
      ffn_c_.init(rng);
    }
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    if (strategy_ != Strategy::kClOnly) {
      catt_l_.collect(prefix + ".catt_l", out);
      ffn_l_.collect(prefix + ".ffn_l", out);
    }
    if (strategy_ != Strategy::kLcOnly) {
      catt_c_.collect(prefix + ".catt_c", out);
      ffn_c_.collect(prefix + ".ffn_c", out);
    }
  }

 private:
  Tensor<S> step_(CattBlock<S>& block, const Tensor<S>& guide, const Tensor<S>& modeled, bool training) {
    return q_is_target_ ? block.forward(modeled, guide, training) : block.forward(guide, modeled, training);
  }
  /// Returns (d guide, d modeled).
  std::pair<Tensor<S>, Tensor<S>> step_bwd_(CattBlock<S>& block, const Tensor<S>& dy) {
    auto [dq, dkv] = block.backward(dy);
    if (q_is_target_) return {std::move(dkv), std::move(dq)};
    return {std::move(dq), std::move(dkv)};
  }
  static void add_(Tensor<S>& into, const Tensor<S>& from) {
    for (long i = 0; i < into.numel(); ++i) into[i] += from[i];
  }

  Strategy strategy_ = kIctmDefaultStrategy;
  bool q_is_target_ = false;
  CattBlock<S> catt_l_, catt_c_;
  FfnBlock<S> ffn_l_, ffn_c_;
};

// ---------------------------------------------------------------------------
// The full temporal module: attach class tokens, run the layer stack, return
// the time-0 slices of both streams.
// ---------------------------------------------------------------------------

template <class S>
class Ictm {
 public:
  Ictm() = default;
  Ictm(long channels, long heads, long layers, Strategy strategy, bool q_is_target)
      : c_(channels), token_l_({channels}), token_c_({channels}), token_l_grad_({channels}),
        token_c_grad_({channels}) {
    for (long i = 0; i < layers; ++i) layers_.emplace_back(channels, heads, strategy, q_is_target);
  }

  long num_layers() const { return static_cast<long>(layers_.size()); }
  Tensor<S>& token_l() { return token_l_; }
  Tensor<S>& token_c() { return token_c_; }

  std::pair<Tensor<S>, Tensor<S>> attach(const Tensor<S>& s_l, const Tensor<S>& s_c) const {
    return {attach_class_token(s_l, token_l_), attach_class_token(s_c, token_c_)};
  }

  /// s_l: [N, C, T_L, P], s_c: [N, C, T_C, P] -> (cls_L, cls_C), each [N, C, P].
  std::pair<Tensor<S>, Tensor<S>> forward(const Tensor<S>& s_l, const Tensor<S>& s_c, bool training) {
    check_axis(s_l.dim(1), c_, "ictm", "lidar channels");
    check_axis(s_c.dim(1), c_, "ictm", "camera channels");
    Tensor<S> a_l = attach_class_token(s_l, token_l_);
    Tensor<S> a_c = attach_class_token(s_c, token_c_);
    for (auto& layer : layers_) {
      auto [nl, nc] = layer.forward(a_l, a_c, training);
      a_l = std::move(nl);
      a_c = std::move(nc);
    }
    if (training) {
      l_shape_ = a_l.shape();
      c_shape_ = a_c.shape();
    }
    return {time0_slice_(a_l), time0_slice_(a_c)};
  }

  /// (d cls_L, d cls_C) -> (d s_l, d s_c); token gradients accumulate.
  std::pair<Tensor<S>, Tensor<S>> backward(const Tensor<S>& dcls_l, const Tensor<S>& dcls_c) {
    Tensor<S> da_l = time0_expand_(dcls_l, l_shape_);
    Tensor<S> da_c = time0_expand_(dcls_c, c_shape_);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      auto [nl, nc] = it->backward(da_l, da_c);
      da_l = std::move(nl);
      da_c = std::move(nc);
    }
    Tensor<S> ds_l = detach_class_token_grad(da_l, token_l_grad_);
    Tensor<S> ds_c = detach_class_token_grad(da_c, token_c_grad_);
    return {std::move(ds_l), std::move(ds_c)};
  }

  void init(Rng& rng) {
    for (long i = 0; i < token_l_.numel(); ++i) token_l_[i] = static_cast<S>(rng.normal(0.0, 0.02));
    for (long i = 0; i < token_c_.numel(); ++i) token_c_[i] = static_cast<S>(rng.normal(0.0, 0.02));
    for (auto& layer : layers_) layer.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    out.push_back({prefix + ".token_l", &token_l_, &token_l_grad_, true});
    out.push_back({prefix + ".token_c", &token_c_, &token_c_grad_, true});
    for (size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(prefix + ".layer" + std::to_string(i + 1), out);
  }

 private:
  static Tensor<S> time0_slice_(const Tensor<S>& seq) {
    const long n = seq.dim(0), c = seq.dim(1), t = seq.dim(2), p = seq.dim(3);
    Tensor<S> out({n, c, p});
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c; ++ci) {
        const S* src = seq.data() + (ni * c + ci) * t * p;
        std::copy(src, src + p, out.data() + (ni * c + ci) * p);
      }
    return out;
  }
  static Tensor<S> time0_expand_(const Tensor<S>& dcls, const std::vector<long>& shape) {
    Tensor<S> out(shape);
    const long n = shape[0], c = shape[1], t = shape[2], p = shape[3];
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c; ++ci) {
        const S* src = dcls.data() + (ni * c + ci) * p;
        std::copy(src, src + p, out.data() + (ni * c + ci) * t * p);
      }
    return out;
  }

  long c_ = 0;
  Tensor<S> token_l_, token_c_, token_l_grad_, token_c_grad_;
  std::vector<IctmLayer<S>> layers_;
  std::vector<long> l_shape_, c_shape_;
};

// ---------------------------------------------------------------------------
// Temporal max pooling over the time axis, the stand-in used when the
// temporal module is ablated away: [N, C, T, P] -> [N, C, P].
// ---------------------------------------------------------------------------

template <class S>
class TemporalMaxPool {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool training) {
    const long n = x.dim(0), c = x.dim(1), t = x.dim(2), p = x.dim(3);
    Tensor<S> out({n, c, p});
    Tensor<long> argmax;
    if (training) argmax = Tensor<long>({n, c, p});
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c; ++ci) {
        const S* src = x.data() + (ni * c + ci) * t * p;
        for (long pi = 0; pi < p; ++pi) {
          S best = src[pi];
          long bt = 0;
          for (long ti = 1; ti < t; ++ti)
            if (src[ti * p + pi] > best) {
              best = src[ti * p + pi];
              bt = ti;
            }
          out.at(ni, ci, pi) = best;
          if (training) argmax.at(ni, ci, pi) = bt;
        }
      }
    if (training) {
      argmax_ = std::move(argmax);
      in_shape_ = x.shape();
    }
    return out;
  }

  Tensor<S> backward(const Tensor<S>& dout) {
    Tensor<S> dx(in_shape_);
    const long n = in_shape_[0], c = in_shape_[1], p = in_shape_[3];
    for (long ni = 0; ni < n; ++ni)
      for (long ci = 0; ci < c; ++ci) {
        S* dst = dx.data() + (ni * c + ci) * in_shape_[2] * p;
        for (long pi = 0; pi < p; ++pi) dst[argmax_.at(ni, ci, pi) * p + pi] += dout.at(ni, ci, pi);
      }
    return dx;
  }

 private:
  Tensor<long> argmax_;
  std::vector<long> in_shape_;
};

}  // namespace licaf
