#pragma once

#include "licaf/nn.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace licaf {

// [N, C, P] <-> rows [(N*P), C] with row index n*P + p.
template <class S>
Tensor<S> ncp_to_rows(const Tensor<S>& x) {
  const long n = x.dim(0), c = x.dim(1), p = x.dim(2);
  Tensor<S> rows({n * p, c});
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci)
      for (long pi = 0; pi < p; ++pi) rows[(ni * p + pi) * c + ci] = x[(ni * c + ci) * p + pi];
  return rows;
}

template <class S>
Tensor<S> rows_to_ncp(const Tensor<S>& rows, long n, long c, long p) {
  Tensor<S> x({n, c, p});
  for (long ni = 0; ni < n; ++ni)
    for (long ci = 0; ci < c; ++ci)
      for (long pi = 0; pi < p; ++pi) x[(ni * c + ci) * p + pi] = rows[(ni * p + pi) * c + ci];
  return x;
}

// ---------------------------------------------------------------------------
// Fusion head: one linear map per modality applied channel-wise at every
// part, outputs concatenated along channels. The first `out` channels come
// from the LiDAR token, the rest from the camera token.
// ---------------------------------------------------------------------------

template <class S>
class FusionHead {
 public:
  FusionHead() = default;
  FusionHead(long in_ch, long out_ch) : in_(in_ch), out_(out_ch), fc_l_(in_ch, out_ch), fc_c_(in_ch, out_ch) {}

  long embed_channels() const { return 2 * out_; }

  /// cls_l, cls_c: [N, Cin, P] -> [N, 2*out, P].
  Tensor<S> forward(const Tensor<S>& cls_l, const Tensor<S>& cls_c, bool training) {
    check_axis(cls_l.dim(1), in_, "fuse", "lidar channels");
    check_axis(cls_c.dim(1), in_, "fuse", "camera channels");
    const long n = cls_l.dim(0), p = cls_l.dim(2);
    n_ = n;
    p_ = p;
    Tensor<S> yl = fc_l_.forward(ncp_to_rows(cls_l), n * p, training);
    Tensor<S> yc = fc_c_.forward(ncp_to_rows(cls_c), n * p, training);
    Tensor<S> emb({n, 2 * out_, p});
    for (long ni = 0; ni < n; ++ni)
      for (long pi = 0; pi < p; ++pi)
        for (long o = 0; o < out_; ++o) {
          emb[(ni * 2 * out_ + o) * p + pi] = yl[(ni * p + pi) * out_ + o];
          emb[(ni * 2 * out_ + out_ + o) * p + pi] = yc[(ni * p + pi) * out_ + o];
        }
    return emb;
  }

  /// Returns (d cls_l, d cls_c).
  std::pair<Tensor<S>, Tensor<S>> backward(const Tensor<S>& demb) {
    const long n = n_, p = p_;
    Tensor<S> dyl({n * p, out_}), dyc({n * p, out_});
    for (long ni = 0; ni < n; ++ni)
      for (long pi = 0; pi < p; ++pi)
        for (long o = 0; o < out_; ++o) {
          dyl[(ni * p + pi) * out_ + o] = demb[(ni * 2 * out_ + o) * p + pi];
          dyc[(ni * p + pi) * out_ + o] = demb[(ni * 2 * out_ + out_ + o) * p + pi];
        }
    Tensor<S> dl = rows_to_ncp(fc_l_.backward(dyl), n, in_, p);
    Tensor<S> dc = rows_to_ncp(fc_c_.backward(dyc), n, in_, p);
    return {std::move(dl), std::move(dc)};
  }

  void init(Rng& rng) {
    fc_l_.init(rng);
    fc_c_.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    fc_l_.collect(prefix + ".fc_l", out);
    fc_c_.collect(prefix + ".fc_c", out);
  }

 private:
  long in_ = 0, out_ = 0;
  nn::Linear<S> fc_l_, fc_c_;
  long n_ = 0, p_ = 0;
};

// ---------------------------------------------------------------------------
// Batch-all triplet loss. Per part: Euclidean distances between the [N, C]
// embedding slices, all (anchor, positive, negative) triples enumerated, the
// hinge averaged over triples with strictly positive loss; the final loss is
// the mean over parts.
// ---------------------------------------------------------------------------

template <class S>
class TripletLoss {
 public:
  explicit TripletLoss(S margin = S(0.2)) : margin_(margin) {}

  S margin() const { return margin_; }

  S forward(const Tensor<S>& emb, const std::vector<int>& labels, bool training) {
    const long n = emb.dim(0), c = emb.dim(1), p = emb.dim(2);
    if (static_cast<long>(labels.size()) != n)
      throw std::invalid_argument("triplet: label count != batch size");
    if (std::set<int>(labels.begin(), labels.end()).size() < 2)
      throw std::invalid_argument("triplet loss undefined: batch has fewer than 2 classes");
    Tensor<S> dist({p, n, n});
    S total = 0;
    for (long pi = 0; pi < p; ++pi) {
      S* d = dist.data() + pi * n * n;
      pairwise_(emb, pi, d);
      S part_sum = 0;
      long active = 0;
      for (long a = 0; a < n; ++a)
        for (long q = 0; q < n; ++q) {
          if (q == a || labels[static_cast<size_t>(q)] != labels[static_cast<size_t>(a)]) continue;
          for (long g = 0; g < n; ++g) {
            if (labels[static_cast<size_t>(g)] == labels[static_cast<size_t>(a)]) continue;
            const S v = d[a * n + q] - d[a * n + g] + margin_;
            if (v > S(0)) {
              part_sum += v;
              ++active;
            }
          }
        }
      total += active ? part_sum / static_cast<S>(active) : S(0);
    }
    if (training) {
      emb_ = emb;
      labels_ = labels;
      dist_ = std::move(dist);
    }
    return total / static_cast<S>(p);
  }

  Tensor<S> backward() {
    const long n = emb_.dim(0), c = emb_.dim(1), p = emb_.dim(2);
    Tensor<S> demb(emb_.shape());
    Tensor<S> dpair({n, n});
    for (long pi = 0; pi < p; ++pi) {
      const S* d = dist_.data() + pi * n * n;
      long active = 0;
      for (long a = 0; a < n; ++a)
        for (long q = 0; q < n; ++q) {
          if (q == a || labels_[static_cast<size_t>(q)] != labels_[static_cast<size_t>(a)]) continue;
          for (long g = 0; g < n; ++g) {
            if (labels_[static_cast<size_t>(g)] == labels_[static_cast<size_t>(a)]) continue;
            if (d[a * n + q] - d[a * n + g] + margin_ > S(0)) ++active;
          }
        }
      if (!active) continue;
      const S scale = S(1) / (static_cast<S>(active) * static_cast<S>(p));
      dpair.zero();
      for (long a = 0; a < n; ++a)
        for (long q = 0; q < n; ++q) {
          if (q == a || labels_[static_cast<size_t>(q)] != labels_[static_cast<size_t>(a)]) continue;
          for (long g = 0; g < n; ++g) {
            if (labels_[static_cast<size_t>(g)] == labels_[static_cast<size_t>(a)]) continue;
            if (d[a * n + q] - d[a * n + g] + margin_ > S(0)) {
              dpair[a * n + q] += scale;
              dpair[a * n + g] -= scale;
            }
          }
        }
      // d dist(i,j) / d e_i = (e_i - e_j) / dist(i,j); zero distances get a
      // zero subgradient.
      for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
          const S g = dpair[i * n + j];
          if (g == S(0)) continue;
          const S dij = d[i * n + j];
          if (dij <= S(1e-12)) continue;
          const S w = g / dij;
          for (long ci = 0; ci < c; ++ci) {
            const S diff = emb_[(i * c + ci) * p + pi] - emb_[(j * c + ci) * p + pi];
            demb[(i * c + ci) * p + pi] += w * diff;
            demb[(j * c + ci) * p + pi] -= w * diff;
          }
        }
    }
    return demb;
  }

 private:
  void pairwise_(const Tensor<S>& emb, long pi, S* d) const {
    const long n = emb.dim(0), c = emb.dim(1), p = emb.dim(2);
    for (long i = 0; i < n; ++i) {
      d[i * n + i] = S(0);
      for (long j = i + 1; j < n; ++j) {
        S s = 0;
        for (long ci = 0; ci < c; ++ci) {
          const S diff = emb[(i * c + ci) * p + pi] - emb[(j * c + ci) * p + pi];
          s += diff * diff;
        }
        const S dij = std::sqrt(s);
        d[i * n + j] = dij;
        d[j * n + i] = dij;
      }
    }
  }

  S margin_ = S(0.2);
  Tensor<S> emb_, dist_;
  std::vector<int> labels_;
};

/// One-shot batch-all triplet loss.
template <class S>
S triplet_loss_batch_all(const Tensor<S>& emb, const std::vector<int>& labels, S margin = S(0.2)) {
  TripletLoss<S> op(margin);
  return op.forward(emb, labels, false);
}

// ---------------------------------------------------------------------------
// Per-part softmax classifiers for the identification loss: part p gets its
// own linear map [C3 -> num_classes]; the loss is the mean over parts and
// samples of the softmax cross-entropy.
// ---------------------------------------------------------------------------

template <class S>
class PartClassifiers {
 public:
  PartClassifiers() = default;
  PartClassifiers(long in_ch, long num_classes, long parts) : in_(in_ch), k_(num_classes), p_(parts) {
    for (long i = 0; i < parts; ++i) linears_.emplace_back(in_ch, num_classes);
  }

  long num_classes() const { return k_; }

  S forward(const Tensor<S>& emb, const std::vector<int>& labels, bool training) {
    check_axis(emb.dim(1), in_, "cross_entropy", "channels");
    check_axis(emb.dim(2), p_, "cross_entropy", "parts");
    const long n = emb.dim(0);
    for (int lb : labels)
      if (lb < 0 || lb >= k_)
        throw std::invalid_argument("cross_entropy: label " + std::to_string(lb) + " outside [0, " +
                                    std::to_string(k_) + ")");
    Tensor<S> probs({p_, n, k_});
    S total = 0;
    for (long pi = 0; pi < p_; ++pi) {
      Tensor<S> rows({n, in_});
      for (long ni = 0; ni < n; ++ni)
        for (long ci = 0; ci < in_; ++ci) rows[ni * in_ + ci] = emb[(ni * in_ + ci) * p_ + pi];
      Tensor<S> logits = linears_[static_cast<size_t>(pi)].forward(rows, n, training);
      for (long ni = 0; ni < n; ++ni) {
        const S* z = logits.data() + ni * k_;
        S m = z[0];
        for (long kk = 1; kk < k_; ++kk) m = std::max(m, z[kk]);
        S sum = 0;
        for (long kk = 0; kk < k_; ++kk) sum += std::exp(z[kk] - m);
        const S lse = m + std::log(sum);
        total += lse - z[labels[static_cast<size_t>(ni)]];
        S* pr = probs.data() + (pi * n + ni) * k_;
        for (long kk = 0; kk < k_; ++kk) pr[kk] = std::exp(z[kk] - lse);
      }
    }
    if (training) {
      probs_ = std::move(probs);
      labels_ = labels;
      n_ = n;
    }
    return total / static_cast<S>(n * p_);
  }

  Tensor<S> backward() {
    const long n = n_;
    Tensor<S> demb({n, in_, p_});
    const S scale = S(1) / static_cast<S>(n * p_);
    for (long pi = 0; pi < p_; ++pi) {
      Tensor<S> dlogits({n, k_});
      for (long ni = 0; ni < n; ++ni) {
        const S* pr = probs_.data() + (pi * n + ni) * k_;
        S* dl = dlogits.data() + ni * k_;
        for (long kk = 0; kk < k_; ++kk) dl[kk] = pr[kk] * scale;
        dl[labels_[static_cast<size_t>(ni)]] -= scale;
      }
      Tensor<S> drows = linears_[static_cast<size_t>(pi)].backward(dlogits);
      for (long ni = 0; ni < n; ++ni)
        for (long ci = 0; ci < in_; ++ci) demb[(ni * in_ + ci) * p_ + pi] += drows[ni * in_ + ci];
    }
    return demb;
  }

  void init(Rng& rng) {
    for (auto& l : linears_) l.init(rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
    for (size_t i = 0; i < linears_.size(); ++i)
      linears_[i].collect(prefix + ".part" + std::to_string(i), out);
  }

 private:
  long in_ = 0, k_ = 0, p_ = 0;
  std::vector<nn::Linear<S>> linears_;
  Tensor<S> probs_;
  std::vector<int> labels_;
  long n_ = 0;
};

/// One-shot cross-entropy with given classifiers.
template <class S>
S cross_entropy_loss(PartClassifiers<S>& cls, const Tensor<S>& emb, const std::vector<int>& labels) {
  return cls.forward(emb, labels, false);
}

}  // namespace licaf
