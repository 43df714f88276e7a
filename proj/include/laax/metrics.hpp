#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "laax/tensor.hpp"

namespace laax {

namespace detail {

inline std::pair<std::size_t, std::size_t> count_classes(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), Errc::shape_mismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, Errc::domain, "labels must be 0 or 1");
    pos += l == 1;
  }
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, Errc::undefined_metric, "metric undefined: labels contain a single class");
  return {pos, neg};
}

inline std::vector<std::size_t> order_by(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace detail

/// Area under the ROC curve as the Mann-Whitney statistic; tied pairs count
/// one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = detail::count_classes(scores, labels);
  const auto idx = detail::order_by(scores, false);
  // Twice the positive rank sum keeps averaged tie ranks integral.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double twice_avg_rank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) twice_rank_sum += twice_avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  const double u = (twice_rank_sum - p * (p + 1.0)) / 2.0;
  return u / (p * n);
}

/// Average precision: sum over distinct thresholds of (R_k - R_{k-1}) P_k.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = detail::count_classes(scores, labels);
  (void)neg;
  const auto idx = detail::order_by(scores, true);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += labels[idx[j]] == 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Per-pixel SSIM of two single-channel planes [H, W]. The Gaussian window is
/// truncated at the borders and renormalized over the in-bounds taps.
inline Tensor ssim_map(const Tensor& a, const Tensor& b, const SsimParams& p = {}) {
  require(a.dim() == 2 && a.shape() == b.shape(), Errc::shape_mismatch, "ssim_map expects two equal [H, W] planes");
  const std::size_t h = a.size(0), w = a.size(1);
  const auto r = static_cast<std::ptrdiff_t>(p.window / 2);
  std::vector<double> g(p.window);
  for (std::size_t i = 0; i < p.window; ++i) {
    const double d = static_cast<double>(static_cast<std::ptrdiff_t>(i) - r);
    g[i] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
  }
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const double k = g[static_cast<std::size_t>(dy + r)] * g[static_cast<std::size_t>(dx + r)];
          const double va = a(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          const double vb = b(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          wsum += k;
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      }
      ma /= wsum;
      mb /= wsum;
      const double va = std::max(0.0, saa / wsum - ma * ma);
      const double vb = std::max(0.0, sbb / wsum - mb * mb);
      const double cov = sab / wsum - ma * mb;
      out(y, x) = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return out;
}

/// SSIM averaged over pixels with mask = 1 (and over channels for [C, H, W]
/// images).
inline double mask_ssim(const Tensor& fake, const Tensor& real, const Tensor& mask, const SsimParams& p = {}) {
  require(fake.shape() == real.shape(), Errc::shape_mismatch, "mask_ssim: image shapes differ");
  require(fake.dim() == 2 || fake.dim() == 3, Errc::shape_mismatch, "mask_ssim expects [H, W] or [C, H, W]");
  const std::size_t c = fake.dim() == 3 ? fake.size(0) : 1;
  const std::size_t h = fake.size(fake.dim() - 2), w = fake.size(fake.dim() - 1);
  require(mask.dim() == 2 && mask.size(0) == h && mask.size(1) == w, Errc::shape_mismatch,
          "mask_ssim: mask must be [H, W]");
  std::size_t count = 0;
  for (double m : mask.data()) count += m >= 0.5;
  require(count > 0, Errc::domain, "mask_ssim: empty mask");
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Tensor a = fake.dim() == 3 ? fake.slice0(ch) : fake;
    const Tensor b = real.dim() == 3 ? real.slice0(ch) : real;
    const Tensor s = ssim_map(a, b, p);
    for (std::size_t i = 0; i < s.numel(); ++i)
      if (mask[i] >= 0.5) total += s[i];
  }
  return total / static_cast<double>(count * c);
}

struct QualityBucket {
  double ssim_lo = 0.0;
  double ssim_hi = 0.0;  // half-open [lo, hi) except the last bucket
  std::size_t fakes = 0;
  double auc = std::nan("");
};

/// AUC per Mask-SSIM range: every real sample against the fakes whose quality
/// falls into the bucket. `quality` is ignored for real samples.
inline std::vector<QualityBucket> bucketed_auc(std::span<const double> scores, std::span<const int> labels,
                                               std::span<const double> quality, std::span<const double> edges) {
  require(scores.size() == labels.size() && quality.size() == labels.size(), Errc::shape_mismatch,
          "bucketed_auc: length mismatch");
  require(edges.size() >= 2 && std::is_sorted(edges.begin(), edges.end()), Errc::domain,
          "bucketed_auc: need at least two increasing edges");
  std::vector<QualityBucket> out;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    QualityBucket q{edges[b], edges[b + 1]};
    const bool last = b + 2 == edges.size();
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool in = quality[i] >= q.ssim_lo && (quality[i] < q.ssim_hi || (last && quality[i] == q.ssim_hi));
      if (labels[i] == 0 || in) {
        s.push_back(scores[i]);
        l.push_back(labels[i]);
        q.fakes += labels[i] == 1;
      }
    }
    if (q.fakes > 0 && q.fakes < s.size()) q.auc = auc(s, l);
    out.push_back(q);
  }
  return out;
}

}  // namespace laax
