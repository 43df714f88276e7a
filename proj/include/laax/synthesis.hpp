#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "laax/random.hpp"
#include "laax/tensor.hpp"

namespace laax {

/// Landmark position in pixel units, (row, col); pixel centres sit on
/// integer coordinates.
struct Landmark {
  double row = 0.0;
  double col = 0.0;
};

struct ImageDims {
  std::size_t channels = 3;
  std::size_t size = 64;
};

enum class Label : int { real = 0, fake = 1 };

struct FaceSample {
  Tensor image;  // C x D x D in [0, 1]
  std::vector<Landmark> landmarks;
  std::uint64_t identity_seed = 0;

  std::size_t channels() const { return image.size(0); }
  std::size_t size() const { return image.size(1); }
};

/// Soft blending mask M and its boundary mask B = 4 M (1 - M), both D x D.
struct BlendingMask {
  Tensor M;
  Tensor B;
};

struct PseudoFake {
  Tensor image;  // the blended I_M
  BlendingMask mask;
  Label label = Label::real;
  /// The unmanipulated source image (the paired original).
  Tensor original;
};

struct DeformParams {
  /// Maximum vertex displacement as a fraction of the hull diameter.
  double magnitude = 0.1;
  /// Gaussian blur kernel width in pixels; 0 or 1 disables the blur.
  std::size_t blur_width = 7;
  /// Quantization levels of the stored mask (255 = 8-bit); 0 keeps full
  /// precision.
  std::size_t levels = 255;
};

/// Per-copy augmentation. Ranges are magnitudes; signs are drawn at random.
/// `none()` yields exact copies.
struct AugmentParams {
  double brightness_min = 0.15, brightness_max = 0.30;
  double channel_shift = 0.10;
  double contrast = 0.15;
  double translate_px = 1.5;
  double scale = 0.03;
  double noise_std = 0.0;
  double blur_sigma = 0.0;

  static AugmentParams none() { return {0, 0, 0, 0, 0, 0, 0, 0}; }
  bool is_identity() const {
    return brightness_max == 0 && channel_shift == 0 && contrast == 0 && translate_px == 0 && scale == 0 &&
           noise_std == 0 && blur_sigma == 0;
  }
};

enum class SynthesisMode { real, sbi, bi };

struct SynthesisParams {
  SynthesisMode mode = SynthesisMode::sbi;
  AugmentParams augment;
  DeformParams deform;
};

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Antialiased coverage of an axis-aligned ellipse at a pixel centre.
inline double ellipse_coverage(double r, double c, double cr, double cc, double ar, double ac) {
  const double rho = std::hypot((r - cr) / ar, (c - cc) / ac);
  const double dist = (rho - 1.0) * std::min(ar, ac);
  return clamp01(0.5 - dist);
}

inline void paint(Tensor& img, std::size_t r, std::size_t c, const double (&rgb)[3], double alpha) {
  if (alpha <= 0.0) return;
  for (std::size_t ch = 0; ch < 3; ++ch) img(ch, r, c) = img(ch, r, c) * (1.0 - alpha) + rgb[ch] * alpha;
}

/// Smooth value noise in [-1, 1]: random lattice values bilinearly interpolated.
inline Tensor value_noise(std::size_t d, std::size_t cells, Rng& rng) {
  Tensor lattice({cells + 1, cells + 1});
  for (auto& v : lattice.data()) v = rng.uniform(-1.0, 1.0);
  Tensor out({d, d});
  const double step = static_cast<double>(cells) / static_cast<double>(d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double y = r * step, x = c * step;
      const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
      const double fy = y - y0, fx = x - x0;
      out(r, c) = (1 - fy) * ((1 - fx) * lattice(y0, x0) + fx * lattice(y0, x0 + 1)) +
                  fy * ((1 - fx) * lattice(y0 + 1, x0) + fx * lattice(y0 + 1, x0 + 1));
    }
  return out;
}

/// Normalized 1-D Gaussian kernel with the OpenCV width-to-sigma rule.
inline std::vector<double> gaussian_kernel(std::size_t width) {
  const double sigma = 0.3 * ((static_cast<double>(width) - 1.0) * 0.5 - 1.0) + 0.8;
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  std::vector<double> k;
  double s = 0.0;
  for (std::ptrdiff_t i = -half; i <= half; ++i) {
    k.push_back(std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma)));
    s += k.back();
  }
  for (auto& v : k) v /= s;
  return k;
}

inline std::vector<double> gaussian_kernel_sigma(double sigma) {
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k;
  double s = 0.0;
  for (std::ptrdiff_t i = -half; i <= half; ++i) {
    k.push_back(std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma)));
    s += k.back();
  }
  for (auto& v : k) v /= s;
  return k;
}

/// Separable convolution of one D x D plane with edge replication.
inline void blur_plane(double* plane, std::size_t rows, std::size_t cols, const std::vector<double>& k) {
  const auto half = static_cast<std::ptrdiff_t>(k.size() / 2);
  std::vector<double> tmp(rows * cols);
  auto at = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t i = -half; i <= half; ++i)
        s += k[static_cast<std::size_t>(i + half)] * plane[r * cols + at(static_cast<std::ptrdiff_t>(c) + i, cols)];
      tmp[r * cols + c] = s;
    }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t i = -half; i <= half; ++i)
        s += k[static_cast<std::size_t>(i + half)] * tmp[at(static_cast<std::ptrdiff_t>(r) + i, rows) * cols + c];
      plane[r * cols + c] = s;
    }
}

/// Bilinear sample of channel `ch` at fractional (r, c), edges clamped.
inline double bilinear(const Tensor& img, std::size_t ch, double r, double c) {
  const double d = static_cast<double>(img.size(1) - 1), w = static_cast<double>(img.size(2) - 1);
  r = std::clamp(r, 0.0, d);
  c = std::clamp(c, 0.0, w);
  const auto r0 = static_cast<std::size_t>(r), c0 = static_cast<std::size_t>(c);
  const std::size_t r1 = std::min(r0 + 1, img.size(1) - 1), c1 = std::min(c0 + 1, img.size(2) - 1);
  const double fr = r - r0, fc = c - c0;
  return (1 - fr) * ((1 - fc) * img(ch, r0, c0) + fc * img(ch, r0, c1)) +
         fr * ((1 - fc) * img(ch, r1, c0) + fc * img(ch, r1, c1));
}

inline double cross(const Landmark& o, const Landmark& a, const Landmark& b) {
  return (a.row - o.row) * (b.col - o.col) - (a.col - o.col) * (b.row - o.row);
}

inline bool inside_polygon(double r, double c, const std::vector<Landmark>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.row > r) != (b.row > r)) {
      const double x = a.col + (r - a.row) * (b.col - a.col) / (b.row - a.row);
      if (c < x) in = !in;
    }
  }
  return in;
}

}  // namespace detail

/// Convex hull (counter-clockwise, no repeated end point) by monotone chain.
/// Throws degenerate_hull when fewer than three non-collinear points exist.
inline std::vector<Landmark> convex_hull(std::vector<Landmark> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Landmark& a, const Landmark& b) { return a.row < b.row || (a.row == b.row && a.col < b.col); });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Landmark& a, const Landmark& b) { return a.row == b.row && a.col == b.col; }),
            pts.end());
  require(pts.size() >= 3, Errc::degenerate_hull, "need at least 3 distinct landmarks, got " + std::to_string(pts.size()));
  std::vector<Landmark> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && detail::cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && detail::cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  require(hull.size() >= 3, Errc::degenerate_hull, "landmarks are collinear");
  return hull;
}

/// Procedural face: background gradient, hair, shaded skin ellipse with
/// texture, eyes, brows, nose and mouth, plus 43 landmarks (17 jaw, 10 brow,
/// 8 eye, 4 nose, 4 mouth) in (row, col) order.
inline FaceSample generate_toy_face(std::uint64_t seed, ImageDims dims = {}) {
  require(dims.size >= 32, Errc::invalid_dimension, "toy faces need D >= 32, got " + std::to_string(dims.size));
  require(dims.channels == 1 || dims.channels == 3, Errc::invalid_dimension,
          "toy faces support 1 or 3 channels, got " + std::to_string(dims.channels));
  using detail::clamp01;
  const std::size_t d = dims.size;
  const double D = static_cast<double>(d);
  Rng rng(derive_seed(seed, 0xFACEu));
  Tensor img({3, d, d});

  double bg0[3], bg1[3];
  for (int ch = 0; ch < 3; ++ch) {
    bg0[ch] = rng.uniform(0.1, 0.9);
    bg1[ch] = clamp01(bg0[ch] + rng.uniform(-0.25, 0.25));
  }
  const Tensor bg_noise = detail::value_noise(d, 4, rng);
  const double grad_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double t = clamp01(0.5 + ((r / D - 0.5) * std::sin(grad_angle) + (c / D - 0.5) * std::cos(grad_angle)));
      for (std::size_t ch = 0; ch < 3; ++ch) img(ch, r, c) = clamp01((1 - t) * bg0[ch] + t * bg1[ch] + 0.05 * bg_noise(r, c));
    }

  const double cr = D * (0.52 + rng.uniform(-0.04, 0.04));
  const double cc = D * (0.5 + rng.uniform(-0.05, 0.05));
  const double ar = D * rng.uniform(0.30, 0.37);
  const double ac = D * rng.uniform(0.22, 0.28);

  const double tone = rng.uniform(0.45, 0.95);
  const double skin[3] = {tone, tone * rng.uniform(0.68, 0.88), tone * rng.uniform(0.5, 0.78)};
  const double hair_l = rng.uniform(0.05, 0.6);
  const double hair[3] = {hair_l, hair_l * rng.uniform(0.6, 1.0), hair_l * rng.uniform(0.4, 0.9)};

  // Hair cap above and around the top of the face.
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double cov = detail::ellipse_coverage(r, c, cr - 0.12 * ar, cc, 1.08 * ar, 1.12 * ac);
      const double gate = clamp01((cr - 0.1 * ar - static_cast<double>(r)) / 2.0);
      detail::paint(img, r, c, hair, cov * gate);
    }

  const Tensor skin_noise = detail::value_noise(d, 6, rng);
  const double shade = rng.uniform(0.08, 0.2);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double cov = detail::ellipse_coverage(r, c, cr, cc, ar, ac);
      if (cov <= 0) continue;
      const double rho2 = std::pow((r - cr) / ar, 2) + std::pow((c - cc) / ac, 2);
      const double f = 1.0 - shade * rho2 + 0.035 * skin_noise(r, c);
      const double col[3] = {clamp01(skin[0] * f), clamp01(skin[1] * f), clamp01(skin[2] * f)};
      detail::paint(img, r, c, col, cov);
    }

  std::vector<Landmark> lm;
  for (int i = 0; i < 17; ++i) {
    const double phi = (-15.0 + 210.0 * i / 16.0) * std::numbers::pi / 180.0;
    lm.push_back({cr + ar * std::sin(phi), cc + ac * std::cos(phi)});
  }

  const double eye_r = cr - ar * rng.uniform(0.12, 0.22);
  const double eye_dc = ac * rng.uniform(0.36, 0.48);
  const double eye_w = ac * rng.uniform(0.15, 0.21);
  const double eye_h = eye_w * rng.uniform(0.4, 0.6);
  const double brow_r = eye_r - eye_h - ar * rng.uniform(0.07, 0.13);
  const double iris_l = rng.uniform(0.05, 0.45);
  const double iris[3] = {iris_l * rng.uniform(0.5, 1.0), iris_l * rng.uniform(0.6, 1.1), iris_l * rng.uniform(0.6, 1.3)};
  const double sclera[3] = {0.93, 0.92, 0.9};
  const double dark[3] = {0.05, 0.04, 0.04};

  for (int side : {-1, 1}) {
    const double ec = cc + side * eye_dc;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        detail::paint(img, r, c, sclera, detail::ellipse_coverage(r, c, eye_r, ec, eye_h, eye_w));
        detail::paint(img, r, c, iris, detail::ellipse_coverage(r, c, eye_r, ec, 0.85 * eye_h, 0.85 * eye_h));
        detail::paint(img, r, c, dark, detail::ellipse_coverage(r, c, eye_r, ec, 0.35 * eye_h, 0.35 * eye_h));
      }
    // Brow: an arc of small discs.
    for (int i = 0; i < 5; ++i) {
      const double t = (i - 2) / 2.0;
      const Landmark p{brow_r + 0.35 * eye_h * t * t, ec + t * 1.2 * eye_w};
      lm.push_back(p);
    }
    for (int s = 0; s <= 20; ++s) {
      const double t = (s - 10) / 10.0;
      const double pr = brow_r + 0.35 * eye_h * t * t, pc = ec + t * 1.2 * eye_w;
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) detail::paint(img, r, c, hair, 0.85 * detail::ellipse_coverage(r, c, pr, pc, 1.1, 1.1));
    }
  }
  for (int side : {-1, 1}) {
    const double ec = cc + side * eye_dc;
    lm.push_back({eye_r, ec - eye_w});
    lm.push_back({eye_r - eye_h, ec});
    lm.push_back({eye_r, ec + eye_w});
    lm.push_back({eye_r + eye_h, ec});
  }

  const double nose_tip = cr + ar * rng.uniform(0.08, 0.2);
  const double nose_w = ac * rng.uniform(0.12, 0.18);
  const double nose_shadow[3] = {skin[0] * 0.75, skin[1] * 0.72, skin[2] * 0.7};
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      if (r > eye_r && r < nose_tip) {
        const double alpha = 0.5 * detail::clamp01(1.2 - std::abs(c - (cc + 0.3 * nose_w)));
        detail::paint(img, r, c, nose_shadow, alpha);
      }
      for (int side : {-1, 1})
        detail::paint(img, r, c, nose_shadow,
                      0.8 * detail::ellipse_coverage(r, c, nose_tip, cc + side * 0.6 * nose_w, 0.9, 1.2));
    }
  lm.push_back({eye_r + 0.3 * (nose_tip - eye_r), cc});
  lm.push_back({nose_tip, cc});
  lm.push_back({nose_tip, cc - nose_w});
  lm.push_back({nose_tip, cc + nose_w});

  const double mouth_r = cr + ar * rng.uniform(0.4, 0.55);
  const double mouth_w = ac * rng.uniform(0.3, 0.45);
  const double mouth_h = ar * rng.uniform(0.05, 0.09);
  const double lips[3] = {rng.uniform(0.5, 0.85), rng.uniform(0.1, 0.3), rng.uniform(0.15, 0.35)};
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      detail::paint(img, r, c, lips, detail::ellipse_coverage(r, c, mouth_r, cc, mouth_h, mouth_w));
      detail::paint(img, r, c, dark, 0.7 * detail::ellipse_coverage(r, c, mouth_r, cc, 0.5, 0.85 * mouth_w));
    }
  lm.push_back({mouth_r, cc - mouth_w});
  lm.push_back({mouth_r - mouth_h, cc});
  lm.push_back({mouth_r, cc + mouth_w});
  lm.push_back({mouth_r + mouth_h, cc});

  // Fine sensor-like grain.
  for (auto& v : img.data()) v = clamp01(v + rng.normal(0.0, 0.008));

  for (auto& p : lm) {
    p.row = std::clamp(p.row, 0.0, D - 1.0);
    p.col = std::clamp(p.col, 0.0, D - 1.0);
  }

  FaceSample out{std::move(img), std::move(lm), seed};
  if (dims.channels == 1) {
    Tensor gray({1, d, d});
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        gray(0, r, c) = 0.299 * out.image(0, r, c) + 0.587 * out.image(1, r, c) + 0.114 * out.image(2, r, c);
    out.image = std::move(gray);
  }
  return out;
}

/// Soft face mask: convex hull of the landmarks with each hull vertex jittered
/// by up to `magnitude` x hull diameter, rasterized, then Gaussian-blurred.
inline Tensor build_convex_hull_mask(std::span<const Landmark> landmarks, std::size_t size, const DeformParams& deform,
                                     Rng& rng) {
  std::vector<Landmark> hull = convex_hull({landmarks.begin(), landmarks.end()});
  require(deform.magnitude >= 0.0, Errc::domain, "deformation magnitude must be non-negative");
  if (deform.magnitude > 0.0) {
    double diameter = 0.0;
    for (const auto& a : hull)
      for (const auto& b : hull) diameter = std::max(diameter, std::hypot(a.row - b.row, a.col - b.col));
    for (auto& p : hull) {
      const double rad = deform.magnitude * diameter * std::sqrt(rng.uniform());
      const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
      p.row += rad * std::sin(ang);
      p.col += rad * std::cos(ang);
    }
  }
  Tensor m({size, size});
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      m(r, c) = detail::inside_polygon(static_cast<double>(r), static_cast<double>(c), hull) ? 1.0 : 0.0;
  if (deform.blur_width > 1) {
    const std::size_t width = deform.blur_width | 1u;
    detail::blur_plane(m.ptr(), size, size, detail::gaussian_kernel(width));
    for (auto& v : m.data()) {
      if (v < 1e-12) v = 0.0;
      else if (v > 1.0 - 1e-12) v = 1.0;
    }
  }
  if (deform.levels > 0) {
    const auto q = static_cast<double>(deform.levels);
    for (auto& v : m.data()) v = std::round(v * q) / q;
  }
  return m;
}

/// I_M = M * I_F + (1 - M) * I_B with M broadcast across channels.
inline Tensor blend(const Tensor& foreground, const Tensor& background, const Tensor& mask) {
  require(foreground.shape() == background.shape() && foreground.dim() == 3, Errc::shape_mismatch,
          "blend images " + shape_str(foreground.shape()) + " vs " + shape_str(background.shape()));
  require(mask.dim() == 2 && mask.size(0) == foreground.size(1) && mask.size(1) == foreground.size(2),
          Errc::shape_mismatch, "blend mask " + shape_str(mask.shape()) + " vs image " + shape_str(foreground.shape()));
  Tensor out(foreground.shape());
  const std::size_t plane = mask.numel();
  for (std::size_t ch = 0; ch < foreground.size(0); ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      // Written as b + m (f - b) so identical inputs blend to themselves exactly.
      const double m = mask[i], f = foreground[ch * plane + i], b = background[ch * plane + i];
      out[ch * plane + i] = m == 1.0 ? f : (m == 0.0 ? b : b + m * (f - b));
    }
  return out;
}

/// B = 4 M (1 - M); maximal (1) where M = 0.5.
inline Tensor boundary_mask(const Tensor& mask) {
  Tensor b(mask.shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    const double m = mask[i];
    require(m >= -1e-12 && m <= 1.0 + 1e-12, Errc::domain, "mask value " + std::to_string(m) + " outside [0,1]");
    const double mc = std::clamp(m, 0.0, 1.0);
    b[i] = 4.0 * mc * (1.0 - mc);
  }
  return b;
}

/// Independent photometric + small geometric perturbation of an image.
inline Tensor augment_image(const Tensor& image, const AugmentParams& p, Rng& rng) {
  if (p.is_identity()) return image;
  const std::size_t ch_n = image.size(0), rows = image.size(1), cols = image.size(2);
  Tensor out = image;
  if (p.translate_px > 0 || p.scale > 0) {
    const double s = 1.0 + rng.uniform(-p.scale, p.scale);
    const double tr = rng.uniform(-p.translate_px, p.translate_px);
    const double tc = rng.uniform(-p.translate_px, p.translate_px);
    const double cr = (rows - 1) / 2.0, cc = (cols - 1) / 2.0;
    for (std::size_t ch = 0; ch < ch_n; ++ch)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          out(ch, r, c) = detail::bilinear(image, ch, (r - cr - tr) / s + cr, (c - cc - tc) / s + cc);
  }
  const double brightness = p.brightness_max > 0 ? rng.signed_magnitude(p.brightness_min, p.brightness_max) : 0.0;
  const double contrast = 1.0 + rng.uniform(-p.contrast, p.contrast);
  std::vector<double> shift(ch_n);
  for (auto& v : shift) v = rng.uniform(-p.channel_shift, p.channel_shift);
  const double mean = out.sum() / static_cast<double>(out.numel());
  const std::size_t plane = rows * cols;
  for (std::size_t ch = 0; ch < ch_n; ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      double& v = out[ch * plane + i];
      v = (v - mean) * contrast + mean + brightness + shift[ch];
    }
  if (p.blur_sigma > 0) {
    const auto k = detail::gaussian_kernel_sigma(p.blur_sigma);
    for (std::size_t ch = 0; ch < ch_n; ++ch) detail::blur_plane(out.ptr() + ch * plane, rows, cols, k);
  }
  if (p.noise_std > 0)
    for (auto& v : out.data()) v += rng.normal(0.0, p.noise_std);
  for (auto& v : out.data()) v = detail::clamp01(v);
  return out;
}

/// Horizontal mirror of a sample including its landmarks.
inline FaceSample flip_horizontal(const FaceSample& s) {
  FaceSample out = s;
  const std::size_t cols = s.image.size(2);
  for (std::size_t ch = 0; ch < s.image.size(0); ++ch)
    for (std::size_t r = 0; r < s.image.size(1); ++r)
      for (std::size_t c = 0; c < cols; ++c) out.image(ch, r, c) = s.image(ch, r, cols - 1 - c);
  for (auto& p : out.landmarks) p.col = static_cast<double>(cols - 1) - p.col;
  return out;
}

inline double landmark_distance(const FaceSample& a, const FaceSample& b) {
  require(a.landmarks.size() == b.landmarks.size(), Errc::shape_mismatch, "landmark counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.landmarks.size(); ++i)
    s += std::pow(a.landmarks[i].row - b.landmarks[i].row, 2) + std::pow(a.landmarks[i].col - b.landmarks[i].col, 2);
  return s / static_cast<double>(a.landmarks.size());
}

/// Builds a pseudo-fake from `sample`.
///   real: pass-through, B = 0, label real.
///   sbi:  the sample blended with an augmented copy of itself through the
///         deformed hull mask of its landmarks; a coin flip decides whether
///         the copy is the foreground or the background.
///   bi:   foreground taken from the pool member (other identity) whose
///         landmarks are closest to the sample's.
inline PseudoFake synthesize_pseudo_fake(const FaceSample& sample, const SynthesisParams& params, Rng& rng,
                                         std::span<const FaceSample> pool = {}) {
  const std::size_t d = sample.size();
  if (params.mode == SynthesisMode::real) {
    Tensor m({d, d});
    return {sample.image, {m, Tensor({d, d})}, Label::real, sample.image};
  }
  Tensor foreground, background;
  if (params.mode == SynthesisMode::sbi) {
    foreground = sample.image;
    background = sample.image;
    Tensor& target = rng.bernoulli(0.5) ? foreground : background;
    target = augment_image(sample.image, params.augment, rng);
  } else {
    require(pool.size() >= 2, Errc::insufficient_pool,
            "BI synthesis needs a candidate pool of at least 2, got " + std::to_string(pool.size()));
    const FaceSample* best = nullptr;
    double best_d = 0.0;
    for (const auto& cand : pool) {
      if (cand.identity_seed == sample.identity_seed) continue;
      const double dist = landmark_distance(sample, cand);
      if (!best || dist < best_d) {
        best = &cand;
        best_d = dist;
      }
    }
    require(best != nullptr, Errc::insufficient_pool, "no candidate with a different identity");
    require(best->image.shape() == sample.image.shape(), Errc::shape_mismatch, "pool image shape differs");
    foreground = best->image;
    background = sample.image;
  }
  Tensor m = build_convex_hull_mask(sample.landmarks, d, params.deform, rng);
  Tensor b = boundary_mask(m);
  Tensor blended = blend(foreground, background, m);
  const Label label = b.max() > 0.0 ? Label::fake : Label::real;
  return {std::move(blended), {std::move(m), std::move(b)}, label, sample.image};
}

}  // namespace laax
