#pragma once

#include <vector>

#include "laax/nn.hpp"

namespace laax {

using ag::Var;

/// Multi-resolution features, finest first: levels[0] is F^(2) and each
/// following level halves the spatial side.
struct FeaturePyramid {
  std::vector<Var> levels;

  std::size_t size() const noexcept { return levels.size(); }
  std::vector<std::size_t> channels() const {
    std::vector<std::size_t> c;
    for (const auto& l : levels) c.push_back(l.size(1));
    return c;
  }
};

enum class FusionMode {
  enhanced,  // gate F by (1 - sigmoid(E))^gamma_w, concatenate with E
  plain,     // additive top-down merge F + E
};

struct EfpnConfig {
  double gamma_w = 1.0;
  FusionMode mode = FusionMode::enhanced;
};

/// One top-down step: E = T(f(F'_next)) with f a 3x3 conv and T a 2x2
/// stride-2 transpose conv, both producing n^(l) channels.
class FuseStep : public nn::Module {
 public:
  FuseStep() = default;
  FuseStep(std::size_t next_channels, std::size_t level_channels, const EfpnConfig& cfg, Rng& rng)
      : reduce(next_channels, level_channels, 3, 1, 1, true, rng),
        upsample(level_channels, level_channels, 2, 2, rng),
        cfg_(cfg),
        level_channels_(level_channels) {}

  /// Output channel layout for the enhanced mode is (filtered F, E).
  Var operator()(const Var& level, const Var& next) const {
    require(next.dim() == 4 && level.dim() == 4 && level.size(0) == next.size(0), Errc::shape_mismatch,
            "fuse_step: batch/rank mismatch");
    Var e = upsample(reduce(next));
    require(e.size(2) == level.size(2) && e.size(3) == level.size(3) && e.size(1) == level.size(1),
            Errc::shape_mismatch,
            "fuse_step: upsampled " + shape_str(e.shape()) + " does not match level " + shape_str(level.shape()));
    if (cfg_.mode == FusionMode::plain) return ag::add(level, e);
    Var gate = ag::pow_scalar(ag::affine(ag::sigmoid(e), -1.0, 1.0), cfg_.gamma_w);
    return ag::concat({ag::mul(level, gate), e}, 1);
  }

  std::size_t out_channels() const {
    return cfg_.mode == FusionMode::plain ? level_channels_ : 2 * level_channels_;
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    reduce.collect(out, nn::join_name(prefix, "reduce"));
    upsample.collect(out, nn::join_name(prefix, "upsample"));
  }

  nn::Conv2d reduce;
  nn::ConvTranspose2d upsample;

 private:
  EfpnConfig cfg_;
  std::size_t level_channels_ = 0;
};

/// Top-down fusion from the coarsest level to the finest, returning F'^(2).
class Efpn : public nn::Module {
 public:
  Efpn() = default;
  /// `level_channels` lists n^(l) finest first.
  Efpn(const std::vector<std::size_t>& level_channels, const EfpnConfig& cfg, Rng& rng) : levels_(level_channels.size()) {
    require(!level_channels.empty(), Errc::configuration, "E-FPN needs at least one level");
    std::size_t next = level_channels.back();
    // steps_[k] fuses level (size-2-k) with its coarser neighbour.
    for (std::size_t l = level_channels.size() - 1; l-- > 0;) {
      steps_.emplace_back(next, level_channels[l], cfg, rng);
      next = steps_.back().out_channels();
    }
    out_channels_ = next;
  }

  Var operator()(const FeaturePyramid& pyramid) const {
    require(pyramid.size() == levels_, Errc::shape_mismatch,
            "E-FPN built for " + std::to_string(levels_) + " levels, got " + std::to_string(pyramid.size()));
    Var fused = pyramid.levels.back();
    for (std::size_t k = 0; k < steps_.size(); ++k) fused = steps_[k](pyramid.levels[levels_ - 2 - k], fused);
    return fused;
  }

  std::size_t out_channels() const noexcept { return out_channels_; }
  std::size_t step_count() const noexcept { return steps_.size(); }
  const FuseStep& step(std::size_t k) const { return steps_.at(k); }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    for (std::size_t k = 0; k < steps_.size(); ++k) steps_[k].collect(out, nn::join_name(prefix, "step" + std::to_string(k)));
  }

 private:
  std::vector<FuseStep> steps_;
  std::size_t levels_ = 0;
  std::size_t out_channels_ = 0;
};

}  // namespace laax
