#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace laax;

TEST(ToyFace, DeterministicAndInRange) {
  const FaceSample a = generate_toy_face(42, {3, 64});
  const FaceSample b = generate_toy_face(42, {3, 64});
  EXPECT_EQ(a.image.shape(), (Shape{3, 64, 64}));
  EXPECT_DOUBLE_EQ(max_abs_diff(a.image, b.image), 0.0);
  EXPECT_GE(a.image.min(), 0.0);
  EXPECT_LE(a.image.max(), 1.0);
  EXPECT_GE(a.landmarks.size(), 3u);
  const FaceSample c = generate_toy_face(43, {3, 64});
  EXPECT_GT(max_abs_diff(a.image, c.image), 0.0);
}

TEST(ConvexHull, DropsInteriorPoints) {
  const std::vector<Landmark> pts{{0, 0}, {0, 4}, {4, 4}, {4, 0}, {2, 2}, {1, 3}};
  const auto hull = convex_hull(pts);
  EXPECT_EQ(hull.size(), 4u);
}

TEST(HullMask, InsideIsOneOutsideIsZero) {
  const std::vector<Landmark> pts{{8, 8}, {8, 24}, {24, 24}, {24, 8}};
  Rng rng(0);
  DeformParams deform{0.0, 1, 0};
  const Tensor m = build_convex_hull_mask(pts, 32, deform, rng);
  EXPECT_EQ(m(16, 16), 1.0);
  EXPECT_EQ(m(2, 2), 0.0);
  EXPECT_EQ(m(30, 16), 0.0);
}

TEST(HullMask, QuantizedToLevels) {
  const FaceSample f = generate_toy_face(3, {3, 64});
  Rng rng(1);
  const Tensor m = build_convex_hull_mask(f.landmarks, 64, DeformParams{}, rng);
  for (double v : m.data()) EXPECT_NEAR(v * 255.0, std::round(v * 255.0), 1e-9);
  EXPECT_EQ(m.min(), 0.0);
  EXPECT_EQ(m.max(), 1.0);
}

TEST(Blend, EndpointsAndMixture) {
  Rng rng(2);
  const Tensor f = laax::testing::random_tensor({3, 8, 8}, rng, 0, 1);
  const Tensor b = laax::testing::random_tensor({3, 8, 8}, rng, 0, 1);
  EXPECT_DOUBLE_EQ(max_abs_diff(blend(f, b, Tensor::ones({8, 8})), f), 0.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(blend(f, b, Tensor::zeros({8, 8})), b), 0.0);
  const Tensor half = blend(f, b, Tensor::full({8, 8}, 0.5));
  for (std::size_t i = 0; i < half.numel(); ++i) EXPECT_NEAR(half[i], 0.5 * (f[i] + b[i]), 1e-12);
  EXPECT_THROW(blend(f, b, Tensor::ones({4, 4})), Error);
}

TEST(BoundaryMask, ValuesAndSymmetry) {
  const Tensor m({1, 5}, {0.0, 0.25, 0.5, 0.75, 1.0});
  const Tensor b = boundary_mask(m);
  EXPECT_DOUBLE_EQ(b[0], 0.0);
  EXPECT_DOUBLE_EQ(b[1], 0.75);
  EXPECT_DOUBLE_EQ(b[2], 1.0);
  EXPECT_DOUBLE_EQ(b[3], 0.75);
  EXPECT_DOUBLE_EQ(b[4], 0.0);
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Tensor mk = laax::testing::random_tensor({16, 16}, rng, 0, 1);
    Tensor inv = mk;
    for (auto& v : inv.data()) v = 1.0 - v;
    EXPECT_LE(max_abs_diff(boundary_mask(mk), boundary_mask(inv)), 1e-12);
  }
  EXPECT_THROW(boundary_mask(Tensor({1}, {1.5})), Error);
}

TEST(Augment, KeepsRangeAndShape) {
  const FaceSample f = generate_toy_face(5, {3, 64});
  Rng rng(4);
  const Tensor a = augment_image(f.image, AugmentParams{}, rng);
  EXPECT_EQ(a.shape(), f.image.shape());
  EXPECT_GE(a.min(), 0.0);
  EXPECT_LE(a.max(), 1.0);
  EXPECT_GT(max_abs_diff(a, f.image), 0.0);
}

TEST(Flip, InvolutionOnImageAndLandmarks) {
  const FaceSample f = generate_toy_face(6, {3, 32});
  const FaceSample ff = flip_horizontal(flip_horizontal(f));
  EXPECT_DOUBLE_EQ(max_abs_diff(ff.image, f.image), 0.0);
  for (std::size_t i = 0; i < f.landmarks.size(); ++i) {
    EXPECT_NEAR(ff.landmarks[i].row, f.landmarks[i].row, 1e-12);
    EXPECT_NEAR(ff.landmarks[i].col, f.landmarks[i].col, 1e-12);
  }
  const FaceSample g = flip_horizontal(f);
  EXPECT_DOUBLE_EQ(g.image(0, 3, 0), f.image(0, 3, 31));
}

TEST(PseudoFake, SelfBlendedHasBandAndLabel) {
  const FaceSample f = generate_toy_face(7, {3, 64});
  Rng rng(5);
  const PseudoFake pf = synthesize_pseudo_fake(f, SynthesisParams{}, rng);
  EXPECT_EQ(pf.label, Label::fake);
  EXPECT_GT(pf.mask.B.max(), 0.9);
  EXPECT_DOUBLE_EQ(max_abs_diff(pf.original, f.image), 0.0);
  // Outside the mask support the image is one of the two sources unchanged.
  std::size_t outside = 0;
  for (std::size_t i = 0; i < pf.mask.M.numel(); ++i) outside += pf.mask.M[i] == 0.0;
  EXPECT_GT(outside, 0u);
  // B is the boundary of M.
  EXPECT_LE(max_abs_diff(boundary_mask(pf.mask.M), pf.mask.B), 1e-12);
}

TEST(PseudoFake, RealModeHasZeroBoundary) {
  const FaceSample f = generate_toy_face(8, {3, 32});
  Rng rng(6);
  const PseudoFake pf = synthesize_pseudo_fake(f, SynthesisParams{SynthesisMode::real, {}, {}}, rng);
  EXPECT_EQ(pf.label, Label::real);
  EXPECT_EQ(pf.mask.B.max(), 0.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(pf.image, f.image), 0.0);
}

TEST(PseudoFake, BlendedImageNeedsPool) {
  const FaceSample f = generate_toy_face(9, {3, 32});
  Rng rng(7);
  SynthesisParams p;
  p.mode = SynthesisMode::bi;
  EXPECT_THROW(
      {
        try {
          synthesize_pseudo_fake(f, p, rng);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), Errc::insufficient_pool);
          throw;
        }
      },
      Error);
  std::vector<FaceSample> pool{f, generate_toy_face(10, {3, 32}), generate_toy_face(11, {3, 32})};
  const PseudoFake pf = synthesize_pseudo_fake(f, p, rng, pool);
  EXPECT_EQ(pf.label, Label::fake);
}

TEST(PseudoFake, SameSeedSameOutput) {
  const FaceSample f = generate_toy_face(12, {3, 32});
  Rng r1(99), r2(99);
  const PseudoFake a = synthesize_pseudo_fake(f, SynthesisParams{}, r1);
  const PseudoFake b = synthesize_pseudo_fake(f, SynthesisParams{}, r2);
  EXPECT_DOUBLE_EQ(max_abs_diff(a.image, b.image), 0.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(a.mask.M, b.mask.M), 0.0);
}

TEST(PseudoFake, ZeroStrengthSelfBlendIsIdentity) {
  const FaceSample f = generate_toy_face(13, {3, 48});
  Rng rng(8);
  SynthesisParams p;
  p.augment = AugmentParams::none();
  const PseudoFake pf = synthesize_pseudo_fake(f, p, rng);
  EXPECT_GT(pf.mask.B.max(), 0.0);
  EXPECT_EQ(max_abs_diff(pf.image, f.image), 0.0);
}
