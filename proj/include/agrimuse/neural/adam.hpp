#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "agrimuse/neural/tensor.hpp"

namespace agrimuse::nn {

struct AdamConfig {
  double lr = 0.0007;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamMoments {
  Mat<S> m;
  Mat<S> v;
};

/// One bias-corrected Adam update of `p` from `p.grad` at step t (1-based).
template <typename S>
void adam_step(Param<S>& p, AdamMoments<S>& state, const AdamConfig& cfg, std::int64_t t) {
  if (state.m.size() == 0) {
    state.m = Mat<S>::Zero(p.value.rows(), p.value.cols());
    state.v = Mat<S>::Zero(p.value.rows(), p.value.cols());
  }
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  state.m = b1 * state.m + (S(1) - b1) * p.grad;
  state.v = b2 * state.v + (S(1) - b2) * p.grad.cwiseAbs2();
  const S c1 = static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const S c2 = static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const S lr = static_cast<S>(cfg.lr);
  const S eps = static_cast<S>(cfg.eps);
  p.value.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

/// Adam over a fixed parameter list; the step counter is shared.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg), state_(params_.size()) {}

  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], state_[i], cfg_, t_);
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Param<S>*> params_;
  AdamConfig cfg_;
  std::vector<AdamMoments<S>> state_;
  std::int64_t t_ = 0;
};

}  // namespace agrimuse::nn
