#pragma once

#include "licaf/network.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Finite-difference gradient checking. Each component builds a toy double-
// precision instance, defines a scalar loss (a fixed random weighting of its
// outputs, or the loss value itself for loss components), and exposes every
// tensor whose analytic gradient should match central differences:
//   fd = (L(x + eps) - L(x - eps)) / (2 eps),  eps = 1e-3
//   rel_err = |analytic - fd| / max(|analytic|, |fd|, 1e-3)
// The bound applies away from active-set boundaries (ReLU/max/hinge). A
// coordinate whose +-eps step straddles such a boundary produces a corrupted
// difference quotient even when the analytic gradient is exact, and in deep
// composites with batch normalization some coordinate straddles one on almost
// every draw. Boundary coordinates are detected by refining eps: the quotient
// of a smooth coordinate converges to the analytic value as eps shrinks, so a
// coordinate that fails at eps but agrees at eps/64 was kinked, not wrong. A
// genuinely wrong gradient disagrees at every eps and still fails. Whole-case
// resampling (fresh seed, up to kGradcheckRetries) remains as a second line
// for draws that sit near a boundary even at the refined step.
// ---------------------------------------------------------------------------

inline constexpr double kGradcheckEps = 1e-3;
inline constexpr int kGradcheckRetries = 10;
inline constexpr long kGradcheckCoordBudget = 500;

struct GradcheckResult {
  std::string component;
  double max_rel_err = 0;  // best (lowest) across tries
  double tolerance = 0;
  long coords_checked = 0;
  long boundary_coords = 0;  // kinked at protocol eps, verified by refinement
  int tries = 0;
  bool pass = false;
};

namespace gc {

struct FdCase {
  // Runs the forward pass in training mode and returns the scalar loss.
  std::function<double()> loss;
  // Zeroes gradients, reruns the forward, and backpropagates.
  std::function<void()> backward;
  struct Entry {
    std::string name;
    Tensor<double>* value;
    Tensor<double>* grad;
  };
  std::vector<Entry> entries;
  std::shared_ptr<void> state;  // owns everything the callbacks capture
};

inline void fill_normal(Tensor<double>& t, Rng& rng, double stdev = 1.0) {
  for (long i = 0; i < t.numel(); ++i) t[i] = stdev * rng.normal();
}

/// Loss weights are O(1/numel) so toy losses stay O(1).
inline Tensor<double> loss_weights(const std::vector<long>& shape, Rng& rng) {
  Tensor<double> w(shape);
  const double s = 1.0 / static_cast<double>(w.numel());
  for (long i = 0; i < w.numel(); ++i) w[i] = s * rng.normal();
  return w;
}

inline double weighted_sum(const Tensor<double>& out, const Tensor<double>& w) {
  double s = 0;
  for (long i = 0; i < out.numel(); ++i) s += out[i] * w[i];
  return s;
}

inline GradcheckResult check_case(const std::string& name, const std::function<FdCase(uint64_t)>& build,
                                  double tolerance, uint64_t seed) {
  GradcheckResult res;
  res.component = name;
  res.tolerance = tolerance;
  res.max_rel_err = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < kGradcheckRetries; ++attempt) {
    FdCase fd = build(seed + static_cast<uint64_t>(attempt) * 7919);
    fd.backward();
    std::vector<Tensor<double>> analytic;
    analytic.reserve(fd.entries.size());
    for (auto& e : fd.entries) analytic.push_back(*e.grad);

    // Spread the coordinate budget across tensors, at least 4 each.
    Rng pick(seed + static_cast<uint64_t>(attempt), 0xc00d5u);
    const long per_tensor =
        std::max<long>(4, kGradcheckCoordBudget / std::max<size_t>(1, fd.entries.size()));
    double worst = 0;
    long coords = 0, boundary = 0;
    for (size_t ei = 0; ei < fd.entries.size(); ++ei) {
      Tensor<double>& x = *fd.entries[ei].value;
      const long n = x.numel();
      std::vector<long> idx(static_cast<size_t>(n));
      for (long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
      if (n > per_tensor) pick.shuffle(idx);
      const long take = std::min(n, per_tensor);
      for (long t = 0; t < take; ++t) {
        const long i = idx[static_cast<size_t>(t)];
        const double ag = analytic[ei][i];
        auto rel_at = [&](double eps) {
          const double keep = x[i];
          x[i] = keep + eps;
          const double lp = fd.loss();
          x[i] = keep - eps;
          const double lm = fd.loss();
          x[i] = keep;
          const double fdg = (lp - lm) / (2 * eps);
          return std::fabs(ag - fdg) / std::max({std::fabs(ag), std::fabs(fdg), 1e-3});
        };
        double rel = rel_at(kGradcheckEps);
        if (rel > tolerance) {
          // Boundary probe: a kinked quotient converges once the step no
          // longer straddles the kink; a wrong gradient never converges.
          rel = rel_at(kGradcheckEps / 64);
          if (rel <= tolerance) ++boundary;
        }
        worst = std::max(worst, rel);
        ++coords;
      }
    }
    res.tries = attempt + 1;
    if (worst < res.max_rel_err) {
      res.max_rel_err = worst;
      res.coords_checked = coords;
      res.boundary_coords = boundary;
    }
    if (res.max_rel_err <= tolerance) break;
  }
  res.pass = res.max_rel_err <= tolerance;
  return res;
}

// --------------------------- component builders ---------------------------

inline FdCase build_gamma(uint64_t seed) {
  struct State {
    Gamma<double> g{6};
    Tensor<double> fm{{3, 6, 2, 4, 4}}, dfm, w;
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 1);
  st->g.init(rng);
  fill_normal(st->fm, rng);
  st->w = loss_weights({3, 6}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return weighted_sum(st->g.forward(st->fm, true), st->w); };
  fd.backward = [st] {
    std::vector<nn::ParamRef<double>> params;
    st->g.collect("g", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    st->g.forward(st->fm, true);
    st->dfm = st->g.backward(st->w);
  };
  std::vector<nn::ParamRef<double>> params;
  st->g.collect("g", params);
  for (auto& p : params)
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.fm", &st->fm, &st->dfm});
  return fd;
}

inline FdCase build_channel_attention(uint64_t seed) {
  struct State {
    ChannelAttention<double> ca;
    Tensor<double> guide{{3, 5}}, desc{{3, 5}}, fm{{3, 5, 2, 3, 3}};
    ChanAttnGrads<double> grads;
    Tensor<double> w;
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 2);
  fill_normal(st->guide, rng);
  fill_normal(st->desc, rng);
  fill_normal(st->fm, rng);
  st->w = loss_weights({3, 5, 2, 3, 3}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return weighted_sum(st->ca.forward(st->guide, st->desc, st->fm, true), st->w); };
  fd.backward = [st] {
    st->ca.forward(st->guide, st->desc, st->fm, true);
    st->grads = st->ca.backward(st->w);
  };
  fd.entries.push_back({"input.guide", &st->guide, &st->grads.dguide});
  fd.entries.push_back({"input.desc", &st->desc, &st->grads.dtarget_desc});
  fd.entries.push_back({"input.fm", &st->fm, &st->grads.dtarget_fm});
  return fd;
}

inline FdCase build_acca(uint64_t seed) {
  // Cycle through all five strategies across retries.
  struct State {
    Acca<double> acca;
    Tensor<double> f_l{{2, 5, 2, 3, 3}}, f_c{{2, 5, 3, 3, 3}};
    AccaGrads<double> grads;
    Tensor<double> w_l, w_c;
    explicit State(Strategy s) : acca(5, s) {}
  };
  const Strategy strat = kAllStrategies[seed % kAllStrategies.size()];
  auto st = std::make_shared<State>(strat);
  Rng rng(seed, 3);
  st->acca.init(rng);
  fill_normal(st->f_l, rng);
  fill_normal(st->f_c, rng);
  st->w_l = loss_weights({2, 5, 2, 3, 3}, rng);
  st->w_c = loss_weights({2, 5, 3, 3, 3}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] {
    auto [e_l, e_c] = st->acca.forward(st->f_l, st->f_c, true);
    return weighted_sum(e_l, st->w_l) + weighted_sum(e_c, st->w_c);
  };
  fd.backward = [st] {
    std::vector<nn::ParamRef<double>> params;
    st->acca.collect("acca", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    st->acca.forward(st->f_l, st->f_c, true);
    st->grads = st->acca.backward(st->w_l, st->w_c);
  };
  std::vector<nn::ParamRef<double>> params;
  st->acca.collect("acca", params);
  for (auto& p : params)
    if (p.trainable && p.name.find("alpha") == std::string::npos && p.name.find("beta") == std::string::npos)
      fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.f_l", &st->f_l, &st->grads.d_fl});
  fd.entries.push_back({"input.f_c", &st->f_c, &st->grads.d_fc});
  return fd;
}

inline FdCase build_cross_attention(uint64_t seed) {
  struct State {
    Mha<double> mha{8, 2};
    Tensor<double> q{{2, 8, 3, 2}}, k{{2, 8, 2, 2}}, v{{2, 8, 2, 2}};
    MhaGrads<double> grads;
    Tensor<double> w;
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 4);
  st->mha.init(rng);
  fill_normal(st->q, rng);
  fill_normal(st->k, rng);
  fill_normal(st->v, rng);
  st->w = loss_weights({2, 8, 3, 2}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return weighted_sum(st->mha.forward(st->q, st->k, st->v, true), st->w); };
  fd.backward = [st] {
    std::vector<nn::ParamRef<double>> params;
    st->mha.collect("mha", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    st->mha.forward(st->q, st->k, st->v, true);
    st->grads = st->mha.backward(st->w);
  };
  std::vector<nn::ParamRef<double>> params;
  st->mha.collect("mha", params);
  for (auto& p : params)
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.q", &st->q, &st->grads.dq});
  fd.entries.push_back({"input.k", &st->k, &st->grads.dk});
  fd.entries.push_back({"input.v", &st->v, &st->grads.dv});
  return fd;
}

inline FdCase build_ictm_layer(uint64_t seed) {
  // Cycle strategies and both query conventions across retries.
  struct State {
    IctmLayer<double> layer;
    Tensor<double> s_l{{2, 8, 2, 2}}, s_c{{2, 8, 3, 2}};
    Tensor<double> ds_l, ds_c, w_l, w_c;
    State(Strategy s, bool qt) : layer(8, 2, s, qt) {}
  };
  const Strategy strat = kAllStrategies[seed % kAllStrategies.size()];
  const bool q_is_target = (seed / kAllStrategies.size()) % 2 == 1;
  auto st = std::make_shared<State>(strat, q_is_target);
  Rng rng(seed, 5);
  st->layer.init(rng);
  fill_normal(st->s_l, rng);
  fill_normal(st->s_c, rng);
  FdCase fd;
  fd.state = st;
  // Output time lengths depend on the strategy, so size the weights lazily.
  auto weights_ready = std::make_shared<bool>(false);
  fd.loss = [st, weights_ready, seed] {
    auto [l_out, c_out] = st->layer.forward(st->s_l, st->s_c, true);
    if (!*weights_ready) {
      Rng wr(seed, 6);
      st->w_l = loss_weights(l_out.shape(), wr);
      st->w_c = loss_weights(c_out.shape(), wr);
      *weights_ready = true;
    }
    return weighted_sum(l_out, st->w_l) + weighted_sum(c_out, st->w_c);
  };
  fd.backward = [st, fd_loss = fd.loss] {
    std::vector<nn::ParamRef<double>> params;
    st->layer.collect("layer", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    fd_loss();
    auto [dl, dc] = st->layer.backward(st->w_l, st->w_c);
    st->ds_l = std::move(dl);
    st->ds_c = std::move(dc);
  };
  std::vector<nn::ParamRef<double>> params;
  st->layer.collect("layer", params);
  for (auto& p : params)
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.s_l", &st->s_l, &st->ds_l});
  fd.entries.push_back({"input.s_c", &st->s_c, &st->ds_c});
  return fd;
}

inline FdCase build_hpp(uint64_t seed) {
  struct State {
    HppOp<double> op{std::vector<long>{1, 2, 4}};
    Tensor<double> fm{{2, 3, 2, 8, 8}}, dfm, w;
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 7);
  fill_normal(st->fm, rng);
  st->w = loss_weights({2, 3, 2, 7}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return weighted_sum(st->op.forward(st->fm, true), st->w); };
  fd.backward = [st] {
    st->op.forward(st->fm, true);
    st->dfm = st->op.backward(st->w);
  };
  fd.entries.push_back({"input.fm", &st->fm, &st->dfm});
  return fd;
}

inline FdCase build_extract_features(uint64_t seed) {
  struct State {
    ResNet9<double> net{1, 8, 8};
    Tensor<double> x{{2, 1, 2, 8, 8}}, dx, w;
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 8);
  st->net.init(rng);
  fill_normal(st->x, rng);
  st->w = loss_weights({2, 8, 2, 2, 2}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return weighted_sum(st->net.extract(st->x, true), st->w); };
  fd.backward = [st] {
    std::vector<nn::ParamRef<double>> params;
    st->net.collect("net", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    st->net.extract(st->x, true);
    st->dx = st->net.backward(st->w);
  };
  std::vector<nn::ParamRef<double>> params;
  st->net.collect("net", params);
  for (auto& p : params)
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.x", &st->x, &st->dx});
  return fd;
}

inline FdCase build_fuse(uint64_t seed) {
  struct State {
    FusionHead<double> head{6, 4};
    Tensor<double> cls_l{{2, 6, 3}}, cls_c{{2, 6, 3}};
    Tensor<double> dl, dc, w;
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 9);
  st->head.init(rng);
  fill_normal(st->cls_l, rng);
  fill_normal(st->cls_c, rng);
  st->w = loss_weights({2, 8, 3}, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return weighted_sum(st->head.forward(st->cls_l, st->cls_c, true), st->w); };
  fd.backward = [st] {
    std::vector<nn::ParamRef<double>> params;
    st->head.collect("head", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    st->head.forward(st->cls_l, st->cls_c, true);
    auto [dl, dc] = st->head.backward(st->w);
    st->dl = std::move(dl);
    st->dc = std::move(dc);
  };
  std::vector<nn::ParamRef<double>> params;
  st->head.collect("head", params);
  for (auto& p : params)
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.cls_l", &st->cls_l, &st->dl});
  fd.entries.push_back({"input.cls_c", &st->cls_c, &st->dc});
  return fd;
}

inline FdCase build_triplet(uint64_t seed) {
  struct State {
    TripletLoss<double> loss{0.2};
    Tensor<double> emb{{4, 5, 2}}, demb;
    std::vector<int> labels{0, 0, 1, 1};
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 10);
  fill_normal(st->emb, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return st->loss.forward(st->emb, st->labels, true); };
  fd.backward = [st] {
    st->loss.forward(st->emb, st->labels, true);
    st->demb = st->loss.backward();
  };
  fd.entries.push_back({"input.emb", &st->emb, &st->demb});
  return fd;
}

inline FdCase build_ce(uint64_t seed) {
  struct State {
    PartClassifiers<double> cls{5, 3, 2};
    Tensor<double> emb{{4, 5, 2}}, demb;
    std::vector<int> labels{0, 1, 2, 0};
  };
  auto st = std::make_shared<State>();
  Rng rng(seed, 11);
  st->cls.init(rng);
  fill_normal(st->emb, rng);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] { return st->cls.forward(st->emb, st->labels, true); };
  fd.backward = [st] {
    std::vector<nn::ParamRef<double>> params;
    st->cls.collect("cls", params);
    for (auto& p : params)
      if (p.grad) p.grad->zero();
    st->cls.forward(st->emb, st->labels, true);
    st->demb = st->cls.backward();
  };
  std::vector<nn::ParamRef<double>> params;
  st->cls.collect("cls", params);
  for (auto& p : params)
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  fd.entries.push_back({"input.emb", &st->emb, &st->demb});
  return fd;
}

inline FdCase build_end_to_end_tiny(uint64_t seed) {
  struct State {
    NetConfig nc;
    std::unique_ptr<LicafNet<double>> net;
    Tensor<double> sils{{4, 1, 6, 8, 8}}, depths{{4, 3, 2, 8, 8}};
    std::vector<int> labels{0, 0, 1, 1};
  };
  auto st = std::make_shared<State>();
  st->nc.width = 8;
  st->nc.embed = 4;
  st->nc.input_hw = 8;
  st->nc.hpp_bins = {1, 2};
  st->nc.num_classes = 2;
  st->nc.heads = 2;
  st->nc.ictm_layers = 1;
  st->net = std::make_unique<LicafNet<double>>(st->nc);
  st->net->init(seed);
  Rng rng(seed, 12);
  fill_normal(st->sils, rng, 0.5);
  fill_normal(st->depths, rng, 0.5);
  FdCase fd;
  fd.state = st;
  fd.loss = [st] {
    Tensor<double> emb = st->net->forward(st->sils, st->depths, true);
    return static_cast<double>(st->net->loss(emb, st->labels).total);
  };
  fd.backward = [st, fd_loss = fd.loss] {
    st->net->zero_grads();
    fd_loss();
    st->net->backward();
  };
  for (auto& p : st->net->params())
    if (p.trainable) fd.entries.push_back({p.name, p.value, p.grad});
  return fd;
}

}  // namespace gc

struct GradcheckSpec {
  std::string name;
  std::function<gc::FdCase(uint64_t)> build;
  double tolerance;
};

inline const std::vector<GradcheckSpec>& gradcheck_registry() {
  static const std::vector<GradcheckSpec> reg = {
      {"gamma", gc::build_gamma, 1e-4},
      {"channel_attention", gc::build_channel_attention, 1e-4},
      {"acca", gc::build_acca, 1e-4},
      {"cross_attention", gc::build_cross_attention, 1e-4},
      {"ictm_layer", gc::build_ictm_layer, 1e-4},
      {"hpp", gc::build_hpp, 1e-4},
      {"extract_features", gc::build_extract_features, 1e-4},
      {"fuse", gc::build_fuse, 1e-4},
      {"triplet", gc::build_triplet, 1e-4},
      {"ce", gc::build_ce, 1e-4},
      {"end_to_end_tiny", gc::build_end_to_end_tiny, 1e-3},
  };
  return reg;
}

inline std::vector<std::string> gradcheck_components() {
  std::vector<std::string> names;
  for (const auto& s : gradcheck_registry()) names.push_back(s.name);
  return names;
}

inline GradcheckResult run_gradcheck(const std::string& component, uint64_t seed = 1) {
  for (const auto& s : gradcheck_registry())
    if (s.name == component) return gc::check_case(s.name, s.build, s.tolerance, seed);
  std::string names;
  for (const auto& s : gradcheck_registry()) names += (names.empty() ? "" : ", ") + s.name;
  throw std::invalid_argument("gradcheck: unknown component '" + component + "' (available: " + names + ")");
}

}  // namespace licaf
