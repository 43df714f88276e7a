#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "laax/laax.hpp"

namespace laax::testing {

/// Random boundary map of side d: either the B of a deformed convex-hull
/// mask or coarsely quantized noise (lots of exact ties).
inline Tensor random_boundary(std::size_t d, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    std::vector<Landmark> pts;
    const std::size_t n = 4 + rng.index(8);
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(0.15, 0.85) * d, rng.uniform(0.15, 0.85) * d});
    DeformParams deform;
    deform.blur_width = 3 + 2 * rng.index(3);
    const Tensor m = build_convex_hull_mask(pts, d, deform, rng);
    return boundary_mask(m);
  }
  Tensor b({d, d});
  const double levels = static_cast<double>(2 + rng.index(6));
  for (auto& v : b.data()) v = std::floor(rng.uniform() * (levels + 1)) / levels;
  for (auto& v : b.data()) v = std::min(v, 1.0);
  return b;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between backprop gradients of the scalar `f` and
/// central differences, over up to `probes` random entries of each input.
inline double max_fd_error(const std::function<ag::Var()>& f, std::vector<ag::Var> inputs, Rng& rng,
                           std::size_t probes = 12, double h = 1e-6) {
  for (auto& x : inputs) x.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto& x : inputs) {
    const Tensor analytic = x.has_grad() ? x.grad() : Tensor(x.shape());
    const std::size_t n = x.value().numel();
    for (std::size_t p = 0; p < std::min(probes, n); ++p) {
      const std::size_t i = probes >= n ? p : rng.index(n);
      const double orig = x.value()[i];
      double up, down;
      {
        ag::NoGradGuard guard;
        x.mutable_value()[i] = orig + h;
        up = f().value().item();
        x.mutable_value()[i] = orig - h;
        down = f().value().item();
      }
      x.mutable_value()[i] = orig;
      worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace laax::testing
