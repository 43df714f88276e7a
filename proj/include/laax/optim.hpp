#pragma once

#include <cmath>
#include <vector>

#include "laax/nn.hpp"

namespace laax {

/// Linear ramp from `start` to `peak` over the first `warmup_fraction` of the
/// steps, then linear decay to `end` at the last step.
struct LrSchedule {
  double start = 5e-5;
  double peak = 2e-4;
  double end = 1e-5;
  double warmup_fraction = 0.25;
  std::size_t total_steps = 1;

  double at(std::size_t step) const {
    if (total_steps <= 1) return peak;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    if (warmup_fraction > 0 && t < warmup_fraction) return start + (peak - start) * t / warmup_fraction;
    const double span = 1.0 - warmup_fraction;
    const double u = span > 0 ? (t - warmup_fraction) / span : 1.0;
    return peak + (end - peak) * std::clamp(u, 0.0, 1.0);
  }
};

/// Adam with decoupled weight decay. Decay skips 1-D parameters (biases and
/// norm affine terms). Bias correction counts the updates each parameter has
/// received, so parameters that start receiving gradients late begin with
/// fresh-state steps.
class AdamW {
 public:
  AdamW(nn::ParamList params, double weight_decay = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.var.shape());
      v_.emplace_back(p.var.shape());
    }
    frozen_.assign(params_.size(), false);
    count_.assign(params_.size(), 0);
  }

  /// Frozen parameters are left untouched by `step`, moments included.
  void set_frozen(std::size_t k, bool frozen) { frozen_.at(k) = frozen; }
  const nn::ParamList& params() const noexcept { return params_; }

  /// Clears moments and per-parameter step counts; `steps()` is kept.
  void reset_state() {
    for (auto& m : m_) m.fill(0.0);
    for (auto& v : v_) v.fill(0.0);
    count_.assign(params_.size(), 0);
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  void step(double lr) {
    ++t_;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      ag::Var& var = params_[k].var;
      if (frozen_[k] || !var.has_grad()) continue;
      const auto n = static_cast<double>(++count_[k]);
      const double c1 = 1.0 - std::pow(b1_, n);
      const double c2 = 1.0 - std::pow(b2_, n);
      Tensor& w = var.mutable_value();
      const Tensor& g = var.grad();
      const bool decay = wd_ > 0 && w.dim() > 1;
      for (std::size_t i = 0; i < w.numel(); ++i) {
        m_[k][i] = b1_ * m_[k][i] + (1 - b1_) * g[i];
        v_[k][i] = b2_ * v_[k][i] + (1 - b2_) * g[i] * g[i];
        if (decay) w[i] -= lr * wd_ * w[i];
        w[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  nn::ParamList params_;
  std::vector<Tensor> m_, v_;
  std::vector<bool> frozen_;
  std::vector<std::size_t> count_;
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace laax
