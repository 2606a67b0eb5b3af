#pragma once

#include "licaf/nn.hpp"

#include <vector>

namespace licaf {

/// Step schedule: multiply by 0.1 once per milestone at or before `iter`.
inline double lr_at(double base_lr, const std::vector<long>& milestones, long iter) {
  double lr = base_lr;
  for (long m : milestones)
    if (m <= iter) lr *= 0.1;
  return lr;
}

/// SGD with momentum and L2 weight decay folded into the gradient:
///   v = mu * v + (g + wd * w);  w -= lr * v
/// Velocity buffers follow registry order; non-trainable entries are skipped.
template <class S>
class Sgd {
 public:
  Sgd(std::vector<nn::ParamRef<S>> params, double base_lr, double momentum, double weight_decay,
      std::vector<long> milestones)
      : params_(std::move(params)),
        base_lr_(base_lr),
        momentum_(momentum),
        wd_(weight_decay),
        milestones_(std::move(milestones)) {
    velocity_.reserve(params_.size());
    for (auto& p : params_) velocity_.emplace_back(p.value->shape());
  }

  double lr(long iter) const { return lr_at(base_lr_, milestones_, iter); }

  void step(long iter) {
    const S lr_now = static_cast<S>(lr(iter));
    const S mu = static_cast<S>(momentum_);
    const S wd = static_cast<S>(wd_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.trainable) continue;
      Tensor<S>& v = velocity_[i];
      S* w = p.value->data();
      const S* g = p.grad->data();
      for (long j = 0; j < p.value->numel(); ++j) {
        v[j] = mu * v[j] + (g[j] + wd * w[j]);
        w[j] -= lr_now * v[j];
      }
    }
  }

 private:
  std::vector<nn::ParamRef<S>> params_;
  double base_lr_, momentum_, wd_;
  std::vector<long> milestones_;
  std::vector<Tensor<S>> velocity_;
};

}  // namespace licaf
