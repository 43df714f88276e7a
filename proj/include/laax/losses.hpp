#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "laax/ops.hpp"

namespace laax {

struct LossConfig {
  double gamma = 2.0;
  double lambda1 = 10.0;     // heatmap weight
  double lambda2 = 100.0;    // consistency weight
  double lambda_att = 10.0;  // L2-Att weight
  double label_smoothing = 0.0;

  void validate() const {
    require(gamma >= 0.0, Errc::configuration, "gamma must be >= 0");
    require(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda_att >= 0.0, Errc::configuration, "loss weights must be >= 0");
    require(label_smoothing >= 0.0 && label_smoothing < 0.5, Errc::configuration, "label smoothing must lie in [0, 0.5)");
  }
};

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kPositiveTol = 1e-6;

namespace detail {

inline void check_pair(const Tensor& pred, const Tensor& target, const char* what) {
  require(pred.shape() == target.shape(), Errc::shape_mismatch,
          std::string(what) + ": " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
}

inline bool is_positive(double h) { return std::abs(h - 1.0) <= kPositiveTol; }

/// Per-pixel focal term and its derivative w.r.t. the prediction.
inline std::pair<double, double> focal_term(double pred, double h, double gamma) {
  const bool pos = is_positive(h);
  const double raw = pos ? pred : 1.0 - pred;
  const double t = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
  const double one_minus = 1.0 - t;
  const double w = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
  const double value = -w * std::log(t);
  double grad = 0.0;
  if (raw == t) {
    double dw = 0.0;
    if (gamma != 0.0) dw = -gamma * std::pow(one_minus, gamma - 1.0);
    const double dl_dt = -dw * std::log(t) - w / t;
    grad = pos ? dl_dt : -dl_dt;
  }
  return {value, grad};
}

inline std::pair<double, double> bce_term(double pred, double c) {
  const double p = std::clamp(pred, kProbClamp, 1.0 - kProbClamp);
  const double value = -(c * std::log(p) + (1.0 - c) * std::log(1.0 - p));
  const double grad = p == pred ? -c / p + (1.0 - c) / (1.0 - p) : 0.0;
  return {value, grad};
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Sum over pixels of -(1 - h~)^gamma log h~, with h~ = pred where the
/// target is 1 and 1 - pred elsewhere.
inline double focal_heatmap_loss(const Tensor& pred, const Tensor& target, double gamma = 2.0) {
  detail::check_pair(pred, target, "focal_heatmap_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += detail::focal_term(pred[i], target[i], gamma).first;
  return s;
}

inline Tensor focal_heatmap_loss_grad(const Tensor& pred, const Tensor& target, double gamma = 2.0) {
  detail::check_pair(pred, target, "focal_heatmap_loss");
  Tensor g(pred.shape());
  for (std::size_t i = 0; i < pred.numel(); ++i) g[i] = detail::focal_term(pred[i], target[i], gamma).second;
  return g;
}

/// Mean binary cross-entropy between predicted and target consistency maps.
inline double consistency_loss(const Tensor& pred, const Tensor& target) {
  detail::check_pair(pred, target, "consistency_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) s += detail::bce_term(pred[i], target[i]).first;
  return s / static_cast<double>(pred.numel());
}

inline Tensor consistency_loss_grad(const Tensor& pred, const Tensor& target) {
  detail::check_pair(pred, target, "consistency_loss");
  Tensor g(pred.shape());
  const double inv = 1.0 / static_cast<double>(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i) g[i] = detail::bce_term(pred[i], target[i]).second * inv;
  return g;
}

inline double smoothed_target(double label, double eps) { return label * (1.0 - eps) + (1.0 - label) * eps; }

/// BCE of sigmoid(logit) against the smoothed label, in the stable
/// softplus(z) - y z form.
inline double classification_loss(double logit, double label, double eps = 0.0) {
  const double y = smoothed_target(label, eps);
  if (std::isinf(logit)) return logit > 0 ? (1.0 - y) * (y == 1.0 ? 0.0 : logit) : (y == 0.0 ? 0.0 : -y * logit);
  return detail::softplus(logit) - y * logit;
}

inline double laa_net_total(double l_bce, double l_h, double l_c, double lambda1 = 10.0, double lambda2 = 100.0) {
  return l_bce + lambda1 * l_h + lambda2 * l_c;
}

inline double laa_former_total(double l_cls, double l_att, double lambda_att = 10.0) {
  return l_cls + lambda_att * l_att;
}

namespace ag {

/// Focal loss over a batch [N, ...]: per-sample sums averaged over N.
inline Var focal_heatmap_loss(const Var& pred, const Tensor& target, double gamma) {
  laax::detail::check_pair(pred.value(), target, "focal_heatmap_loss");
  const std::size_t n = pred.dim() > 0 ? pred.size(0) : 1;
  const double inv = 1.0 / static_cast<double>(n);
  auto grad = std::make_shared<Tensor>(pred.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.value().numel(); ++i) {
    const auto [v, g] = laax::detail::focal_term(pred.value()[i], target[i], gamma);
    s += v;
    (*grad)[i] = g * inv;
  }
  Var out = Var::result(Tensor::scalar(s * inv), {&pred});
  if (out.needs_backward())
    out.set_backward([grad](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      const double up = self.grad[0];
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * (*grad)[i];
    });
  return out;
}

/// Mean BCE over every element of the batch.
inline Var consistency_loss(const Var& pred, const Tensor& target) {
  laax::detail::check_pair(pred.value(), target, "consistency_loss");
  const double inv = 1.0 / static_cast<double>(pred.value().numel());
  auto grad = std::make_shared<Tensor>(pred.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.value().numel(); ++i) {
    const auto [v, g] = laax::detail::bce_term(pred.value()[i], target[i]);
    s += v;
    (*grad)[i] = g * inv;
  }
  Var out = Var::result(Tensor::scalar(s * inv), {&pred});
  if (out.needs_backward())
    out.set_backward([grad](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      const double up = self.grad[0];
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * (*grad)[i];
    });
  return out;
}

/// Mean smoothed BCE over a batch of logits [N].
inline Var classification_loss(const Var& logits, std::span<const double> labels, double eps) {
  require(logits.value().numel() == labels.size(), Errc::shape_mismatch, "classification_loss: label count mismatch");
  const std::size_t n = labels.size();
  const double inv = 1.0 / static_cast<double>(n);
  auto grad = std::make_shared<Tensor>(logits.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.value()[i], y = smoothed_target(labels[i], eps);
    s += laax::classification_loss(z, labels[i], eps);
    (*grad)[i] = (laax::ag::detail::sigmoid(z) - y) * inv;
  }
  Var out = Var::result(Tensor::scalar(s * inv), {&logits});
  if (out.needs_backward())
    out.set_backward([grad](Node& self) {
      Tensor& g = self.input(0).grad_buffer();
      const double up = self.grad[0];
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * (*grad)[i];
    });
  return out;
}

inline Var laa_net_total(const Var& l_bce, const Var& l_h, const Var& l_c, const LossConfig& cfg) {
  Var total = l_bce;
  if (l_h.defined()) total = add(total, scale(l_h, cfg.lambda1));
  if (l_c.defined()) total = add(total, scale(l_c, cfg.lambda2));
  return total;
}

inline Var laa_former_total(const Var& l_cls, const Var& l_att, const LossConfig& cfg) {
  return l_att.defined() ? add(l_cls, scale(l_att, cfg.lambda_att)) : l_cls;
}

}  // namespace ag

}  // namespace laax
