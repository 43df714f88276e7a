#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "laax/laax.hpp"

namespace laax::oracle {

/// Block maximum by explicit nested loops.
inline std::vector<std::vector<double>> block_max(const Tensor& b, std::size_t patch) {
  const std::size_t g = b.size(0) / patch;
  std::vector<std::vector<double>> out(g, std::vector<double>(g, -1.0));
  for (std::size_t r = 0; r < b.size(0); ++r)
    for (std::size_t c = 0; c < b.size(1); ++c) out[r / patch][c / patch] = std::max(out[r / patch][c / patch], b(r, c));
  return out;
}

/// Cells equal to the positive grid maximum, compared on a 1e-9 lattice.
inline std::vector<GridPoint> maxima(const std::vector<std::vector<double>>& g) {
  auto q = [](double v) { return std::llround(v * 1e9); };
  long long best = 0;
  for (const auto& row : g)
    for (double v : row) best = std::max(best, q(v));
  std::vector<GridPoint> out;
  if (best <= 0) return out;
  for (std::size_t r = 0; r < g.size(); ++r)
    for (std::size_t c = 0; c < g[r].size(); ++c)
      if (q(g[r][c]) == best) out.push_back({r, c});
  return out;
}

/// Heatmap target by per-center Gaussian rendering: every center draws its
/// own full map, and the result is the pixelwise maximum over those maps.
inline Tensor heatmap(const Tensor& b, std::size_t grid, double t = 0.7, double ratio = 1.0 / 3.0,
                      double sigma_min = 0.5) {
  const auto pooled = block_max(b, b.size(0) / grid);
  std::vector<Tensor> maps;
  for (const GridPoint p : maxima(pooled)) {
    double w = 0, h = 0;
    for (std::size_t c = 0; c < grid; ++c) w += pooled[p.row][c] > 0.0;
    for (std::size_t r = 0; r < grid; ++r) h += pooled[r][p.col] > 0.0;
    const double sigma = std::max(sigma_min, ratio * gaussian_radius(w, h, t));
    Tensor m({grid, grid});
    for (std::size_t r = 0; r < grid; ++r)
      for (std::size_t c = 0; c < grid; ++c) {
        const double dr = double(r) - double(p.row), dc = double(c) - double(p.col);
        m(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      }
    maps.push_back(std::move(m));
  }
  Tensor out({grid, grid});
  for (std::size_t i = 0; i < out.numel(); ++i)
    for (const auto& m : maps) out[i] = std::max(out[i], m[i]);
  return out;
}

/// Root of a decreasing function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) >= 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Largest corner displacement keeping IoU >= t in each of the three
/// displacement cases, found numerically on the IoU itself.
inline double radius(double w, double h, double t) {
  const double area = w * h, m = std::min(w, h);
  const double shifted = bisect(
      [&](double r) {
        const double inter = (w - r) * (h - r);
        return inter / (2.0 * area - inter) - t;
      },
      0.0, m);
  const double inward = bisect([&](double r) { return (w - 2 * r) * (h - 2 * r) / area - t; }, 0.0, m / 2.0);
  const double outward = bisect([&](double r) { return area / ((w + 2 * r) * (h + 2 * r)) - t; }, 0.0, 4.0 * (w + h));
  return std::min({shifted, inward, outward});
}

/// AUC as the fraction of (positive, negative) pairs ordered correctly, ties
/// counting one half.
inline double pairwise_auc(std::span<const double> s, std::span<const int> y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

}  // namespace laax::oracle
