#pragma once

#include "licaf/acca.hpp"
#include "licaf/backbone.hpp"
#include "licaf/config.hpp"
#include "licaf/head.hpp"
#include "licaf/ictm.hpp"
#include "licaf/io.hpp"
#include "licaf/strategy.hpp"

#include <numeric>
#include <string>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Architecture hyperparameters, resolved from a Config. Key map:
//   model.width / model.embed / model.input_hw / model.hpp_bins / model.num_classes
//   acca.enabled / acca.strategy
//   ictm.enabled / ictm.layers / ictm.heads / ictm.strategy / ictm.q_is_target
//   loss.margin / loss.tri_weight / loss.ce_weight
// ---------------------------------------------------------------------------

struct NetConfig {
  long width = 512;
  long embed = 128;
  long input_hw = 64;
  std::vector<long> hpp_bins = kDefaultHppBins;
  long num_classes = 0;  // 0 disables the classification head
  bool acca_enabled = true;
  Strategy acca_strategy = kAccaDefaultStrategy;
  bool ictm_enabled = true;
  long ictm_layers = 2;
  long heads = 16;
  Strategy ictm_strategy = kIctmDefaultStrategy;
  bool q_is_target = false;
  double margin = 0.2;
  double tri_weight = 1.0;
  double ce_weight = 1.0;

  long parts() const { return std::accumulate(hpp_bins.begin(), hpp_bins.end(), 0L); }

  static NetConfig from(const Config& cfg) {
    NetConfig nc;
    nc.width = cfg.get_int("model.width", nc.width);
    nc.embed = cfg.get_int("model.embed", nc.embed);
    nc.input_hw = cfg.get_int("model.input_hw", nc.input_hw);
    nc.hpp_bins = cfg.get_int_list("model.hpp_bins", nc.hpp_bins);
    nc.num_classes = cfg.get_int("model.num_classes", nc.num_classes);
    nc.acca_enabled = cfg.get_bool("acca.enabled", nc.acca_enabled);
    nc.acca_strategy = parse_strategy(cfg.get_str("acca.strategy", strategy_key(nc.acca_strategy)));
    nc.ictm_enabled = cfg.get_bool("ictm.enabled", nc.ictm_enabled);
    nc.ictm_layers = cfg.get_int("ictm.layers", nc.ictm_layers);
    nc.heads = cfg.get_int("ictm.heads", nc.heads);
    nc.ictm_strategy = parse_strategy(cfg.get_str("ictm.strategy", strategy_key(nc.ictm_strategy)));
    nc.q_is_target = cfg.get_bool("ictm.q_is_target", nc.q_is_target);
    nc.margin = cfg.get_real("loss.margin", nc.margin);
    nc.tri_weight = cfg.get_real("loss.tri_weight", nc.tri_weight);
    nc.ce_weight = cfg.get_real("loss.ce_weight", nc.ce_weight);
    return nc;
  }
};

template <class S>
struct LossParts {
  S tri = 0, ce = 0, total = 0;
};

// ---------------------------------------------------------------------------
// Full two-stream network:
//   silhouettes [N,1,T_C,H,W] --extractor--> F_C --\
//                                                   ACCA -> blend+HPP -> ICTM -> fuse -> emb
//   depths      [N,3,T_L,H,W] --extractor--> F_L --/
// With ACCA off, streams pool directly (HPP); with ICTM off, class tokens are
// replaced by a temporal max over each pooled stream.
// ---------------------------------------------------------------------------

template <class S>
class LicafNet {
 public:
  explicit LicafNet(const NetConfig& cfg)
      : cfg_(cfg),
        ext_c_(1, cfg.width, cfg.input_hw),
        ext_l_(3, cfg.width, cfg.input_hw),
        acca_(cfg.width, cfg.acca_strategy),
        blend_l_(cfg.hpp_bins),
        blend_c_(cfg.hpp_bins),
        hpp_l_(cfg.hpp_bins),
        hpp_c_(cfg.hpp_bins),
        ictm_(cfg.width, cfg.heads, cfg.ictm_layers, cfg.ictm_strategy, cfg.q_is_target),
        head_(cfg.width, cfg.embed),
        tri_(static_cast<S>(cfg.margin)) {
    if (cfg.num_classes > 0) cls_ = PartClassifiers<S>(head_.embed_channels(), cfg.num_classes, cfg.parts());
  }

  const NetConfig& config() const { return cfg_; }
  long embed_channels() const { return head_.embed_channels(); }

  /// Embedding [N, 2*embed, parts]; LiDAR-derived half first along channels.
  Tensor<S> forward(const Tensor<S>& sils, const Tensor<S>& depths, bool training) {
    Tensor<S> f_c = ext_c_.extract(sils, training);
    Tensor<S> f_l = ext_l_.extract(depths, training);
    Tensor<S> s_l, s_c;
    if (cfg_.acca_enabled) {
      auto [e_l, e_c] = acca_.forward(f_l, f_c, training);
      s_l = blend_l_.forward(f_l, e_l, acca_.alpha(), training);
      s_c = blend_c_.forward(f_c, e_c, acca_.beta(), training);
    } else {
      s_l = hpp_l_.forward(f_l, training);
      s_c = hpp_c_.forward(f_c, training);
    }
    Tensor<S> cls_l, cls_c;
    if (cfg_.ictm_enabled) {
      auto [tl, tc] = ictm_.forward(s_l, s_c, training);
      cls_l = std::move(tl);
      cls_c = std::move(tc);
    } else {
      cls_l = tmax_l_.forward(s_l, training);
      cls_c = tmax_c_.forward(s_c, training);
    }
    return head_.forward(cls_l, cls_c, training);
  }

  LossParts<S> loss(const Tensor<S>& emb, const std::vector<int>& labels) {
    LossParts<S> parts;
    parts.tri = tri_.forward(emb, labels, true);
    if (cfg_.num_classes > 0) parts.ce = cls_.forward(emb, labels, true);
    parts.total = static_cast<S>(cfg_.tri_weight) * parts.tri + static_cast<S>(cfg_.ce_weight) * parts.ce;
    return parts;
  }

  /// Backprop from both loss terms through every enabled module; gradients
  /// accumulate into the registry tensors.
  void backward() {
    Tensor<S> demb = tri_.backward();
    const S tw = static_cast<S>(cfg_.tri_weight);
    for (long i = 0; i < demb.numel(); ++i) demb[i] *= tw;
    if (cfg_.num_classes > 0) {
      Tensor<S> dce = cls_.backward();
      const S cw = static_cast<S>(cfg_.ce_weight);
      for (long i = 0; i < demb.numel(); ++i) demb[i] += cw * dce[i];
    }
    auto [dcls_l, dcls_c] = head_.backward(demb);
    Tensor<S> ds_l, ds_c;
    if (cfg_.ictm_enabled) {
      auto [dl, dc] = ictm_.backward(dcls_l, dcls_c);
      ds_l = std::move(dl);
      ds_c = std::move(dc);
    } else {
      ds_l = tmax_l_.backward(dcls_l);
      ds_c = tmax_c_.backward(dcls_c);
    }
    Tensor<S> df_l, df_c;
    if (cfg_.acca_enabled) {
      auto [df_l_blend, de_l] = blend_l_.backward(ds_l, acca_.alpha(), acca_.alpha_grad());
      auto [df_c_blend, de_c] = blend_c_.backward(ds_c, acca_.beta(), acca_.beta_grad());
      AccaGrads<S> ag = acca_.backward(de_l, de_c);
      df_l = std::move(df_l_blend);
      df_c = std::move(df_c_blend);
      for (long i = 0; i < df_l.numel(); ++i) df_l[i] += ag.d_fl[i];
      for (long i = 0; i < df_c.numel(); ++i) df_c[i] += ag.d_fc[i];
    } else {
      df_l = hpp_l_.backward(ds_l);
      df_c = hpp_c_.backward(ds_c);
    }
    ext_l_.backward(df_l);
    ext_c_.backward(df_c);
  }

  /// Registry in a fixed order; only enabled modules contribute.
  std::vector<nn::ParamRef<S>> params() {
    std::vector<nn::ParamRef<S>> out;
    ext_l_.collect("extractor_l", out);
    ext_c_.collect("extractor_c", out);
    if (cfg_.acca_enabled) acca_.collect("acca", out);
    if (cfg_.ictm_enabled) ictm_.collect("ictm", out);
    head_.collect("fusion", out);
    if (cfg_.num_classes > 0) cls_.collect("classifier", out);
    return out;
  }

  void init(uint64_t seed) {
    Rng rng(seed, 0x494e49u);
    ext_l_.init(rng);
    ext_c_.init(rng);
    acca_.init(rng);
    ictm_.init(rng);
    head_.init(rng);
    if (cfg_.num_classes > 0) cls_.init(rng);
  }

  void zero_grads() {
    for (auto& p : params())
      if (p.grad) p.grad->zero();
  }

  void save(const std::string& path) {
    std::map<std::string, Tensor<S>> arrays;
    for (auto& p : params()) arrays.emplace(p.name, *p.value);
    save_checkpoint(path, arrays);
  }

  void load(const std::string& path) {
    auto stored = load_checkpoint<S>(path);
    auto refs = params();
    if (stored.size() != refs.size())
      throw std::runtime_error("checkpoint " + path + ": has " + std::to_string(stored.size()) +
                               " tensors, model needs " + std::to_string(refs.size()));
    for (auto& p : refs) {
      auto it = stored.find(p.name);
      if (it == stored.end()) throw std::runtime_error("checkpoint " + path + ": missing tensor " + p.name);
      if (!it->second.same_shape(*p.value))
        throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + p.name + ": " +
                                 it->second.shape_string() + " vs " + p.value->shape_string());
      *p.value = it->second;
    }
  }

 private:
  NetConfig cfg_;
  ResNet9<S> ext_c_, ext_l_;
  Acca<S> acca_;
  BlendPool<S> blend_l_, blend_c_;
  HppOp<S> hpp_l_, hpp_c_;
  Ictm<S> ictm_;
  TemporalMaxPool<S> tmax_l_, tmax_c_;
  FusionHead<S> head_;
  PartClassifiers<S> cls_;
  TripletLoss<S> tri_;
};

}  // namespace licaf
