#pragma once

#include <cmath>
#include <vector>

#include "laax/efpn.hpp"
#include "laax/vulnerability.hpp"

namespace laax {

struct LaaNetConfig {
  std::size_t in_channels = 3;
  std::size_t image_size = 64;
  /// Channel width of each backbone stage; stage s has stride 2^(s+1).
  std::vector<std::size_t> widths{16, 32, 64, 128};
  /// How many of the deepest stages feed the E-FPN. The fused map (and the
  /// heatmap/consistency heads) sit at the stride of the finest fused stage.
  std::size_t fused_levels = 3;
  std::size_t norm_groups = 4;
  std::size_t embed_dim = 32;
  double heatmap_bias_init = -2.19;
  EfpnConfig efpn;

  std::size_t head_stride() const { return std::size_t{1} << (widths.size() - fused_levels + 1); }
  std::size_t heatmap_size() const { return image_size / head_stride(); }

  void validate() const {
    require(!widths.empty(), Errc::configuration, "LAA-Net needs at least one backbone stage");
    require(fused_levels >= 1 && fused_levels <= widths.size(), Errc::configuration,
            "fused_levels must lie in [1, stage count]");
    require(image_size % (std::size_t{1} << widths.size()) == 0, Errc::shape_mismatch,
            "image size " + std::to_string(image_size) + " not divisible by 2^" + std::to_string(widths.size()));
    for (auto w : widths)
      require(w % norm_groups == 0, Errc::configuration, "stage width not divisible by norm_groups");
  }
};

struct HeadSelection {
  bool heatmap = true;
  bool consistency = true;
};

struct LaaNetOutputs {
  Var logit;        // [N]
  Var heatmap;      // [N, 1, D_H, D_H], undefined when disabled
  Var consistency;  // [N, 1, D_H, D_H], undefined when disabled
  Var features;     // fused E-FPN map shared by all heads
};

namespace ag {

/// (1 + cos(e_anchor, e_ij)) / 2 per position of emb[N,E,H,W]; the anchor
/// cell itself is exactly 1.
inline Var anchor_similarity_map(const Var& emb, const std::vector<GridPoint>& anchors) {
  require(emb.dim() == 4 && anchors.size() == emb.size(0), Errc::configuration,
          "one consistency anchor per sample is required");
  const std::size_t n = emb.size(0), e = emb.size(1), h = emb.size(2), w = emb.size(3), hw = h * w;
  constexpr double eps = 1e-12;
  for (const auto& a : anchors)
    require(a.row < h && a.col < w, Errc::shape_mismatch, "consistency anchor outside feature grid");
  auto norms = std::make_shared<std::vector<double>>(n * hw);
  const Tensor& x = emb.value();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t q = 0; q < hw; ++q) {
      double s = 0.0;
      for (std::size_t k = 0; k < e; ++k) s += x[(b * e + k) * hw + q] * x[(b * e + k) * hw + q];
      (*norms)[b * hw + q] = std::sqrt(s + eps);
    }
  Tensor v({n, 1, h, w});
  auto cosines = std::make_shared<std::vector<double>>(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t a = anchors[b].row * w + anchors[b].col;
    for (std::size_t q = 0; q < hw; ++q) {
      double dot = 0.0;
      for (std::size_t k = 0; k < e; ++k) dot += x[(b * e + k) * hw + a] * x[(b * e + k) * hw + q];
      const double c = q == a ? 1.0 : dot / ((*norms)[b * hw + a] * (*norms)[b * hw + q]);
      (*cosines)[b * hw + q] = c;
      v[b * hw + q] = q == a ? 1.0 : 0.5 * (1.0 + c);
    }
  }
  Var out = Var::result(std::move(v), {&emb});
  if (out.needs_backward())
    out.set_backward([n, e, hw, w, anchors, norms, cosines](Node& self) {
      const Tensor& x = self.input(0).value;
      Tensor& g = self.input(0).grad_buffer();
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t a = anchors[b].row * w + anchors[b].col;
        const double na = (*norms)[b * hw + a];
        std::vector<double> ga(e, 0.0);
        for (std::size_t q = 0; q < hw; ++q) {
          if (q == a) continue;
          const double up = 0.5 * self.grad[b * hw + q];
          if (up == 0.0) continue;
          const double nq = (*norms)[b * hw + q], c = (*cosines)[b * hw + q];
          for (std::size_t k = 0; k < e; ++k) {
            const double xa = x[(b * e + k) * hw + a], xq = x[(b * e + k) * hw + q];
            g[(b * e + k) * hw + q] += up * (xa / (na * nq) - c * xq / (nq * nq));
            ga[k] += up * (xq / (na * nq) - c * xa / (na * na));
          }
        }
        for (std::size_t k = 0; k < e; ++k) g[(b * e + k) * hw + a] += ga[k];
      }
    });
  return out;
}

}  // namespace ag

/// Strided conv-norm-SiLU stages producing the feature pyramid.
class Backbone : public nn::Module {
 public:
  Backbone() = default;
  Backbone(std::size_t in_channels, const std::vector<std::size_t>& widths, std::size_t groups, Rng& rng) {
    std::size_t in = in_channels;
    for (auto w : widths) {
      stages_.emplace_back(in, w, 3, 2, groups, rng);
      in = w;
    }
  }

  FeaturePyramid operator()(const Var& images) const {
    require(images.dim() == 4, Errc::shape_mismatch, "backbone expects [N, C, D, D]");
    const std::size_t need = std::size_t{1} << stages_.size();
    require(images.size(2) % need == 0 && images.size(3) % need == 0, Errc::shape_mismatch,
            "input side " + std::to_string(images.size(2)) + " not divisible by " + std::to_string(need));
    FeaturePyramid p;
    Var x = images;
    for (const auto& s : stages_) {
      x = s(x);
      p.levels.push_back(x);
    }
    return p;
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    for (std::size_t i = 0; i < stages_.size(); ++i) stages_[i].collect(out, nn::join_name(prefix, "stage" + std::to_string(i)));
  }

 private:
  std::vector<nn::ConvNormAct> stages_;
};

/// CNN detector: backbone -> E-FPN -> classification / heatmap / consistency.
class LaaNet : public nn::Module {
 public:
  LaaNet(const LaaNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x1AA));
    backbone_ = Backbone(cfg.in_channels, cfg.widths, cfg.norm_groups, rng);
    std::vector<std::size_t> fused(cfg.widths.end() - static_cast<std::ptrdiff_t>(cfg.fused_levels), cfg.widths.end());
    efpn_ = Efpn(fused, cfg.efpn, rng);
    const std::size_t f = efpn_.out_channels();
    classifier_ = nn::Linear(f, 1, 1.0 / std::sqrt(static_cast<double>(f)), rng);
    heatmap_head_ = nn::Conv2d(f, 1, 1, 1, 0, true, rng);
    heatmap_head_.bias.mutable_value().fill(cfg.heatmap_bias_init);
    embed_head_ = nn::Conv2d(f, cfg.embed_dim, 1, 1, 0, true, rng);
  }
  LaaNet(const LaaNet&) = delete;
  LaaNet& operator=(const LaaNet&) = delete;

  const LaaNetConfig& config() const noexcept { return cfg_; }

  FeaturePyramid backbone_forward(const Var& images) const { return backbone_(images); }

  /// Pyramid levels consumed by the E-FPN (the deepest `fused_levels`).
  FeaturePyramid fpn_inputs(const FeaturePyramid& full) const {
    FeaturePyramid p;
    p.levels.assign(full.levels.end() - static_cast<std::ptrdiff_t>(cfg_.fused_levels), full.levels.end());
    return p;
  }

  /// `anchors` holds one consistency anchor per sample on the D_H grid and
  /// is required when the consistency head is selected.
  LaaNetOutputs forward(const Var& images, const std::vector<GridPoint>* anchors = nullptr,
                        HeadSelection heads = {}) const {
    require(images.dim() == 4 && images.size(1) == cfg_.in_channels, Errc::shape_mismatch,
            "LAA-Net expects [N, " + std::to_string(cfg_.in_channels) + ", D, D], got " + shape_str(images.shape()));
    if (heads.consistency)
      require(anchors != nullptr, Errc::configuration, "consistency head enabled but no anchor p_s supplied");
    LaaNetOutputs out;
    out.features = efpn_(fpn_inputs(backbone_forward(images)));
    const std::size_t n = images.size(0);
    out.logit = ag::reshape(classifier_(ag::global_avg_pool(out.features)), {n});
    if (heads.heatmap) out.heatmap = ag::sigmoid(heatmap_head_(out.features));
    if (heads.consistency) out.consistency = ag::anchor_similarity_map(embed_head_(out.features), *anchors);
    return out;
  }

  LaaNetOutputs classify(const Var& images) const { return forward(images, nullptr, {false, false}); }

  const Efpn& efpn() const noexcept { return efpn_; }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    backbone_.collect(out, nn::join_name(prefix, "backbone"));
    efpn_.collect(out, nn::join_name(prefix, "efpn"));
    classifier_.collect(out, nn::join_name(prefix, "classifier"));
    heatmap_head_.collect(out, nn::join_name(prefix, "heatmap_head"));
    embed_head_.collect(out, nn::join_name(prefix, "embed_head"));
  }

 private:
  LaaNetConfig cfg_;
  Backbone backbone_;
  Efpn efpn_;
  nn::Linear classifier_;
  nn::Conv2d heatmap_head_;
  nn::Conv2d embed_head_;
};

}  // namespace laax
