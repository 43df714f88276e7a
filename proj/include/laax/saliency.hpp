#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "laax/io.hpp"
#include "laax/train.hpp"

namespace laax {

enum class SaliencyKind {
  gradcam,    // gradient-weighted activation of the last shared feature map
  auxiliary,  // the model's own localization output (heatmap or L2-Att map)
};

struct SaliencyMap {
  Tensor raw;        // at feature resolution, before normalization
  Tensor upsampled;  // [D, D] in [0, 1]
};

/// Half-pixel-centred bilinear resize of a [g, g] map to [d, d].
inline Tensor upsample_bilinear(const Tensor& grid, std::size_t d) {
  require(grid.dim() == 2, Errc::shape_mismatch, "upsample expects a 2-D map");
  const std::size_t gh = grid.size(0), gw = grid.size(1);
  Tensor out({d, d});
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double y = std::clamp((r + 0.5) * gh / static_cast<double>(d) - 0.5, 0.0, gh - 1.0);
      const double x = std::clamp((c + 0.5) * gw / static_cast<double>(d) - 0.5, 0.0, gw - 1.0);
      const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
      const std::size_t y1 = std::min(y0 + 1, gh - 1), x1 = std::min(x0 + 1, gw - 1);
      const double fy = y - y0, fx = x - x0;
      out(r, c) = (1 - fy) * ((1 - fx) * grid(y0, x0) + fx * grid(y0, x1)) +
                  fy * ((1 - fx) * grid(y1, x0) + fx * grid(y1, x1));
    }
  return out;
}

/// Min-max normalization to [0, 1]; a constant map becomes all zeros.
inline Tensor normalize_unit(Tensor t) {
  const double lo = t.min(), hi = t.max();
  if (!(hi > lo)) {
    t.fill(0.0);
    return t;
  }
  for (auto& v : t.data()) v = (v - lo) / (hi - lo);
  return t;
}

namespace detail {

/// relu(sum_k alpha_k F_k) with alpha_k the spatial mean of dlogit/dF_k.
inline Tensor grad_cam(const Var& features) {
  require(features.has_grad(), Errc::numerical, "no gradient reached the feature map");
  const Tensor& f = features.value();
  const Tensor& g = features.grad();
  const std::size_t k = f.size(1), h = f.size(2), w = f.size(3), hw = h * w;
  Tensor cam({h, w});
  for (std::size_t c = 0; c < k; ++c) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < hw; ++i) alpha += g[c * hw + i];
    alpha /= static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) cam[i] += alpha * f[c * hw + i];
  }
  for (auto& v : cam.data()) v = std::max(0.0, v);
  return cam;
}

}  // namespace detail

/// Saliency of a single image [C, D, D].
inline SaliencyMap compute_saliency(const Detector& model, const Tensor& image, SaliencyKind kind) {
  require(image.dim() == 3 && image.size(0) == model.channels() && image.size(1) == model.image_size() &&
              image.size(2) == model.image_size(),
          Errc::shape_mismatch, "image " + shape_str(image.shape()) + " does not match the model input");
  const std::size_t d = model.image_size();
  const Var x(image.reshaped({1, image.size(0), d, d}));
  SaliencyMap out;
  if (model.family() == ModelFamily::laa_net) {
    const LaaNet& net = model.net();
    if (kind == SaliencyKind::gradcam) {
      const LaaNetOutputs o = net.forward(x, nullptr, {false, false});
      ag::sum(o.logit).backward();
      out.raw = detail::grad_cam(o.features);
    } else {
      ag::NoGradGuard guard;
      const LaaNetOutputs o = net.forward(x, nullptr, {true, false});
      const std::size_t dh = o.heatmap.size(2);
      out.raw = o.heatmap.value().reshaped({dh, dh});
    }
  } else {
    const LaaFormer& former = model.former();
    if (kind == SaliencyKind::gradcam) {
      // Grad-CAM on the token grid entering the last encoder block; the final
      // block's patch outputs do not reach the class token.
      TokenSequence z = former.patch_embed(x);
      const auto& blocks = former.encoder().blocks;
      for (std::size_t i = 0; i + 1 < blocks.size(); ++i) z.tokens = blocks[i](z.tokens);
      const std::size_t np = z.num_patches;
      const Var grid = L2AttHead::to_grid(ag::slice(z.tokens, 1, 1, np));
      const Var tokens = ag::concat(
          {ag::slice(z.tokens, 1, 0, 1), ag::permute(ag::reshape(grid, {1, grid.size(1), np}), {0, 2, 1})}, 1);
      const Var logit = former.classify_tokens(blocks.back()(tokens));
      ag::sum(logit).backward();
      out.raw = detail::grad_cam(grid);
    } else {
      ag::NoGradGuard guard;
      const LaaFormerOutputs o = former.forward(x, true);
      const std::size_t g = o.attention.size(2);
      out.raw = o.attention.value().reshaped({g, g});
    }
  }
  for (auto& p : model.parameters()) p.var.zero_grad();
  out.upsampled = normalize_unit(upsample_bilinear(out.raw, d));
  return out;
}

/// Input blended with a heat colormap of the saliency.
inline Tensor saliency_overlay(const Tensor& image, const Tensor& saliency, double alpha = 0.5) {
  const std::size_t c = image.size(0), h = image.size(1), w = image.size(2);
  require(saliency.dim() == 2 && saliency.size(0) == h && saliency.size(1) == w, Errc::shape_mismatch,
          "saliency and image sizes differ");
  Tensor out({3, h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col) {
      const double s = saliency(r, col);
      const double heat[3] = {std::clamp(3 * s, 0.0, 1.0), std::clamp(3 * s - 1, 0.0, 1.0), std::clamp(3 * s - 2, 0.0, 1.0)};
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double base = image(c == 3 ? ch : 0, r, col);
        out(ch, r, col) = (1 - alpha) * base + alpha * heat[ch];
      }
    }
  return out;
}

/// Writes the overlay to `out_path` (PPM) and the raw and upsampled maps to
/// the same stem with a `.laax` extension.
inline SaliencyMap export_saliency(const Detector& model, const Tensor& image, const fs::path& out_path,
                                   SaliencyKind kind = SaliencyKind::gradcam) {
  SaliencyMap s = compute_saliency(model, image, kind);
  write_pnm(saliency_overlay(image, s.upsampled), out_path);
  ArrayBundle b;
  b.meta = {{"kind", kind == SaliencyKind::gradcam ? "gradcam" : "auxiliary"}};
  b.arrays["saliency"] = s.upsampled;
  b.arrays["raw"] = s.raw;
  fs::path raw = out_path;
  raw.replace_extension(".laax");
  save_bundle(b, raw);
  return s;
}

}  // namespace laax
