#pragma once

#include <cmath>
#include <optional>

#include "laax/random.hpp"
#include "laax/synthesis.hpp"
#include "laax/vulnerability.hpp"

namespace laax {

struct Extent {
  std::size_t width = 0;   // positive cells on the row through the point
  std::size_t height = 0;  // positive cells on the column through the point
};

/// Width/height of the blending band measured through `p`.
inline Extent boundary_extent(const Tensor& boundary, GridPoint p) {
  require(boundary.dim() == 2 && p.row < boundary.size(0) && p.col < boundary.size(1), Errc::shape_mismatch,
          "boundary_extent: point outside grid");
  require(boundary(p.row, p.col) > 0.0, Errc::zero_extent, "boundary_extent: B is zero at the query point");
  Extent e;
  for (std::size_t c = 0; c < boundary.size(1); ++c) e.width += boundary(p.row, c) > 0.0;
  for (std::size_t r = 0; r < boundary.size(0); ++r) e.height += boundary(r, p.col) > 0.0;
  return e;
}

/// Largest corner displacement r keeping IoU >= t against a w x h box, taken
/// as the minimum over the three corner cases: one box shifted diagonally by
/// r, both corners pulled inward by r, both pushed outward by r.
inline double gaussian_radius(double w, double h, double t) {
  require(t > 0.0 && t <= 1.0, Errc::domain, "IoU threshold must lie in (0, 1]");
  require(w > 0.0 && h > 0.0, Errc::domain, "box sides must be positive");
  const double s = w + h, area = w * h;
  // Shifted: (1+t)(w-r)(h-r) >= 2t wh  ->  r^2 - s r + wh(1-t)/(1+t) >= 0, lower root.
  const double c1 = area * (1.0 - t) / (1.0 + t);
  const double r1 = (s - std::sqrt(std::max(0.0, s * s - 4.0 * c1))) / 2.0;
  // Inward: (w-2r)(h-2r) >= t wh  ->  4r^2 - 2s r + (1-t)wh >= 0, lower root.
  const double r2 = (2.0 * s - std::sqrt(std::max(0.0, 4.0 * s * s - 16.0 * (1.0 - t) * area))) / 8.0;
  // Outward: wh >= t (w+2r)(h+2r)  ->  4t r^2 + 2t s r - (1-t)wh <= 0, positive root.
  const double r3 = (-2.0 * t * s + std::sqrt(4.0 * t * t * s * s + 16.0 * t * (1.0 - t) * area)) / (8.0 * t);
  return std::max(0.0, std::min({r1, r2, r3}));
}

struct HeatmapParams {
  double iou_threshold = 0.7;
  double sigma_ratio = 1.0 / 3.0;  // sigma_k = r_k / 3
  double sigma_min = 0.5;
};

struct HeatmapGT {
  Tensor H;
  VulnerableRegionSet centers;
  std::vector<double> sigmas;
};

/// Unnormalized Gaussian exp(-d^2 / (2 sigma^2)) around `center` written into
/// `grid` by elementwise max.
inline void splat_gaussian_max(Tensor& grid, GridPoint center, double sigma) {
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t i = 0; i < grid.size(0); ++i)
    for (std::size_t j = 0; j < grid.size(1); ++j) {
      const double di = static_cast<double>(i) - static_cast<double>(center.row);
      const double dj = static_cast<double>(j) - static_cast<double>(center.col);
      grid(i, j) = std::max(grid(i, j), std::exp(-(di * di + dj * dj) / denom));
    }
}

/// Heatmap target on a grid_dim x grid_dim grid. B is max-pooled to that grid
/// first so peaks survive downsampling; each vulnerable point contributes a
/// Gaussian with sigma = r/3 (floored), superimposed by elementwise max.
inline HeatmapGT heatmap_gt(const Tensor& boundary, std::size_t grid_dim, const HeatmapParams& params = {}) {
  detail::check_square_unit(boundary, "heatmap_gt");
  const std::size_t d = boundary.size(0);
  require(grid_dim > 0 && grid_dim <= d, Errc::domain, "heatmap grid must satisfy 0 < D_H <= D");
  require(d % grid_dim == 0, Errc::tiling, "D not divisible by D_H");
  const Tensor pooled = grid_dim == d ? boundary : patch_aggregate(boundary, d / grid_dim, Aggregation::max);
  HeatmapGT gt{Tensor({grid_dim, grid_dim}), vulnerable_points(pooled), {}};
  for (const auto& p : gt.centers.locations) {
    const Extent e = boundary_extent(pooled, p);
    const double r = gaussian_radius(static_cast<double>(e.width), static_cast<double>(e.height), params.iou_threshold);
    const double sigma = std::max(params.sigma_min, params.sigma_ratio * r);
    gt.sigmas.push_back(sigma);
    splat_gaussian_max(gt.H, p, sigma);
  }
  return gt;
}

struct ConsistencyGT {
  Tensor C;
  std::optional<GridPoint> anchor;
  double anchor_value = 0.0;
};

/// C = 1 - |b_uv - B| for a given anchor (u, v).
inline ConsistencyGT consistency_from_anchor(const Tensor& boundary, GridPoint anchor) {
  require(anchor.row < boundary.size(0) && anchor.col < boundary.size(1), Errc::shape_mismatch,
          "consistency anchor outside grid");
  ConsistencyGT gt{Tensor(boundary.shape()), anchor, boundary(anchor.row, anchor.col)};
  for (std::size_t i = 0; i < boundary.numel(); ++i) gt.C[i] = 1.0 - std::abs(gt.anchor_value - boundary[i]);
  return gt;
}

/// Consistency target with the anchor drawn uniformly among the vulnerable
/// points. A real sample (B = 0) has no anchor and C = 1 everywhere.
inline ConsistencyGT consistency_gt(const Tensor& boundary, Rng& rng) {
  const VulnerableRegionSet pts = vulnerable_points(boundary);
  if (pts.empty()) return {Tensor::ones(boundary.shape()), std::nullopt, 0.0};
  return consistency_from_anchor(boundary, pts.locations[rng.index(pts.size())]);
}

struct PatchAttentionGT {
  Tensor S;
  VulnerableRegionSet centers;
  double sigma = 1.0;
};

/// Patch-level target: Gaussians (sigma in patch units) on the vulnerable
/// patches of B, superimposed by elementwise max. Zero for real samples.
inline PatchAttentionGT patch_attention_gt(const Tensor& boundary, std::size_t patch, double sigma = 1.0) {
  require(sigma > 0.0, Errc::domain, "sigma must be positive");
  VulnerableRegionSet centers = vulnerable_patches(boundary, patch, Aggregation::max);
  PatchAttentionGT gt{Tensor({centers.grid_size, centers.grid_size}), std::move(centers), sigma};
  for (const auto& p : gt.centers.locations) splat_gaussian_max(gt.S, p, sigma);
  return gt;
}

}  // namespace laax
