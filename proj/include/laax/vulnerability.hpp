#pragma once

#include <cmath>
#include <compare>
#include <vector>

#include "laax/tensor.hpp"

namespace laax {

/// Cell of a square grid, 0-based (row, col). The 1-based [1, D_f] interval
/// used in the literature maps to [0, D_f - 1] here.
struct GridPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const GridPoint&) const = default;
};

enum class Granularity { point, patch };
enum class Aggregation { max, mean };

struct VulnerableRegionSet {
  std::vector<GridPoint> locations;  // row-major order
  Granularity granularity = Granularity::point;
  std::size_t grid_size = 0;

  bool empty() const noexcept { return locations.empty(); }
  std::size_t size() const noexcept { return locations.size(); }
};

namespace detail {

inline void check_square_unit(const Tensor& b, const char* what) {
  require(b.dim() == 2 && b.size(0) == b.size(1), Errc::shape_mismatch,
          std::string(what) + " expects a square 2-D map, got " + shape_str(b.shape()));
  for (double v : b.data())
    require(v >= -1e-12 && v <= 1.0 + 1e-12, Errc::domain, std::string(what) + ": value outside [0,1]");
}

/// Rounds to a 1e-9 lattice so tie detection is reproducible.
inline double tie_round(double v) { return std::round(v * 1e9) / 1e9; }

}  // namespace detail

/// All cells attaining the global maximum of a grid (after 1e-9 rounding).
/// Empty when the maximum is not positive.
inline std::vector<GridPoint> argmax_set(const Tensor& grid) {
  double best = 0.0;
  for (double v : grid.data()) best = std::max(best, detail::tie_round(v));
  std::vector<GridPoint> out;
  if (best <= 0.0) return out;
  const std::size_t cols = grid.size(1);
  for (std::size_t i = 0; i < grid.numel(); ++i)
    if (detail::tie_round(grid[i]) == best) out.push_back({i / cols, i % cols});
  return out;
}

/// Vulnerable points: argmax of B at pixel level (f is the identity).
inline VulnerableRegionSet vulnerable_points(const Tensor& boundary) {
  detail::check_square_unit(boundary, "vulnerable_points");
  return {argmax_set(boundary), Granularity::point, boundary.size(0)};
}

/// Aggregates each non-overlapping patch x patch block of B into one cell.
inline Tensor patch_aggregate(const Tensor& boundary, std::size_t patch, Aggregation agg = Aggregation::max) {
  require(boundary.dim() == 2 && boundary.size(0) == boundary.size(1), Errc::shape_mismatch,
          "patch_aggregate expects a square 2-D map, got " + shape_str(boundary.shape()));
  const std::size_t d = boundary.size(0);
  require(patch > 0 && d % patch == 0, Errc::tiling,
          "side " + std::to_string(d) + " not divisible by patch " + std::to_string(patch));
  const std::size_t g = d / patch;
  Tensor out({g, g});
  for (std::size_t l = 0; l < g; ++l)
    for (std::size_t m = 0; m < g; ++m) {
      double acc = agg == Aggregation::max ? boundary(l * patch, m * patch) : 0.0;
      for (std::size_t i = 0; i < patch; ++i)
        for (std::size_t j = 0; j < patch; ++j) {
          const double v = boundary(l * patch + i, m * patch + j);
          acc = agg == Aggregation::max ? std::max(acc, v) : acc + v;
        }
      out(l, m) = agg == Aggregation::max ? acc : acc / static_cast<double>(patch * patch);
    }
  return out;
}

/// Vulnerable patches: argmax of the patch-aggregated B.
inline VulnerableRegionSet vulnerable_patches(const Tensor& boundary, std::size_t patch,
                                              Aggregation agg = Aggregation::max) {
  detail::check_square_unit(boundary, "vulnerable_patches");
  const Tensor grid = patch_aggregate(boundary, patch, agg);
  return {argmax_set(grid), Granularity::patch, grid.size(0)};
}

}  // namespace laax
