#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "laax/ops.hpp"
#include "laax/random.hpp"

namespace laax::nn {

using ag::Var;

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Base for anything owning parameters. Parameters are `Var` handles, so a
/// collected list aliases the module's storage.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(ParamList& out, const std::string& prefix) const = 0;

  ParamList parameters() const {
    ParamList out;
    collect(out, "");
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.var.value().numel();
    return n;
  }
};

inline void add_param(ParamList& out, const std::string& prefix, const std::string& name, const Var& v) {
  if (v.defined()) out.push_back({join_name(prefix, name), v});
}

inline Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.normal(0.0, std);
  return t;
}

inline Tensor trunc_normal(Shape shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.truncated_normal(std);
  return t;
}

inline void zero_(Var& v) {
  if (v.defined()) v.mutable_value().fill(0.0);
}

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias, Rng& rng)
      : weight(Var::parameter(he_normal({out, in, kernel, kernel}, in * kernel * kernel, rng))),
        stride_(stride),
        pad_(pad) {
    if (bias) this->bias = Var::parameter(Tensor({out}));
  }

  Var operator()(const Var& x) const { return ag::conv2d(x, weight, bias, stride_, pad_); }

  void collect(ParamList& out, const std::string& prefix) const override {
    add_param(out, prefix, "weight", weight);
    add_param(out, prefix, "bias", bias);
  }

  Var weight;
  Var bias;

 private:
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng)
      : weight(Var::parameter(he_normal({in, out, kernel, kernel}, in * kernel * kernel / (stride * stride), rng))),
        bias(Var::parameter(Tensor({out}))),
        stride_(stride) {}

  Var operator()(const Var& x) const { return ag::conv_transpose2d(x, weight, bias, stride_); }

  void collect(ParamList& out, const std::string& prefix) const override {
    add_param(out, prefix, "weight", weight);
    add_param(out, prefix, "bias", bias);
  }

  Var weight;
  Var bias;

 private:
  std::size_t stride_ = 2;
};

class Linear : public Module {
 public:
  Linear() = default;
  /// Truncated-normal weights with the given std; zero bias.
  Linear(std::size_t in, std::size_t out, double std, Rng& rng, bool bias = true)
      : weight(Var::parameter(trunc_normal({in, out}, std, rng))) {
    if (bias) this->bias = Var::parameter(Tensor({out}));
  }

  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }

  void collect(ParamList& out, const std::string& prefix) const override {
    add_param(out, prefix, "weight", weight);
    add_param(out, prefix, "bias", bias);
  }

  Var weight;
  Var bias;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim)
      : gamma(Var::parameter(Tensor::ones({dim}))), beta(Var::parameter(Tensor({dim}))) {}

  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }

  void collect(ParamList& out, const std::string& prefix) const override {
    add_param(out, prefix, "gamma", gamma);
    add_param(out, prefix, "beta", beta);
  }

  Var gamma;
  Var beta;
};

class GroupNorm : public Module {
 public:
  GroupNorm() = default;
  GroupNorm(std::size_t groups, std::size_t channels)
      : gamma(Var::parameter(Tensor::ones({channels}))), beta(Var::parameter(Tensor({channels}))), groups_(groups) {
    require(groups > 0 && channels % groups == 0, Errc::configuration,
            std::to_string(channels) + " channels not divisible into " + std::to_string(groups) + " groups");
  }

  Var operator()(const Var& x) const { return ag::group_norm(x, groups_, gamma, beta); }

  void collect(ParamList& out, const std::string& prefix) const override {
    add_param(out, prefix, "gamma", gamma);
    add_param(out, prefix, "beta", beta);
  }

  Var gamma;
  Var beta;

 private:
  std::size_t groups_ = 1;
};

/// conv -> group norm -> SiLU. The conv carries no bias (the norm's beta
/// takes that role), so a zero input maps to a zero output at init.
class ConvNormAct : public Module {
 public:
  ConvNormAct() = default;
  ConvNormAct(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t groups, Rng& rng)
      : conv(in, out, kernel, stride, kernel / 2, false, rng), norm(groups, out) {}

  Var operator()(const Var& x) const { return ag::silu(norm(conv(x))); }

  void collect(ParamList& out, const std::string& prefix) const override {
    conv.collect(out, join_name(prefix, "conv"));
    norm.collect(out, join_name(prefix, "norm"));
  }

  Conv2d conv;
  GroupNorm norm;
};

/// Largest divisor of `channels` not exceeding `preferred`.
inline std::size_t pick_groups(std::size_t channels, std::size_t preferred) {
  for (std::size_t g = std::min(preferred, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace laax::nn
