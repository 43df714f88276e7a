#include <gtest/gtest.h>

#include <numbers>

#include "test_util.hpp"

using namespace laax;
using laax::testing::max_fd_error;
using laax::testing::random_tensor;

TEST(FocalLoss, WorkedExamples) {
  EXPECT_NEAR(focal_heatmap_loss(Tensor({1}, {0.5}), Tensor({1}, {1.0})), 0.25 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(focal_heatmap_loss(Tensor({1}, {0.5}), Tensor({1}, {1.0})), 0.17329, 1e-5);
  EXPECT_NEAR(focal_heatmap_loss(Tensor({1}, {1.0}), Tensor({1}, {1.0})), 0.0, 1e-12);
  EXPECT_NEAR(focal_heatmap_loss(Tensor({1}, {0.0}), Tensor({1}, {0.0})), 0.0, 1e-12);
}

TEST(FocalLoss, SoftTargetsAreNegatives) {
  // h = 0.6 is not a peak: the term uses 1 - pred.
  const double v = focal_heatmap_loss(Tensor({1}, {0.3}), Tensor({1}, {0.6}));
  EXPECT_NEAR(v, -0.09 * std::log(0.7), 1e-12);
}

TEST(FocalLoss, GammaZeroIsCrossEntropyOnPeaks) {
  Rng rng(1);
  const Tensor p = random_tensor({20}, rng, 0.05, 0.95);
  Tensor h({20});
  for (std::size_t i = 0; i < 20; i += 3) h[i] = 1.0;
  double ce = 0.0;
  for (std::size_t i = 0; i < 20; ++i) ce -= h[i] == 1.0 ? std::log(p[i]) : std::log(1.0 - p[i]);
  EXPECT_NEAR(focal_heatmap_loss(p, h, 0.0), ce, 1e-10);
}

TEST(FocalLoss, SumsOverPixels) {
  const Tensor p({4}, {0.5, 0.5, 0.5, 0.5});
  const Tensor h({4}, {1.0, 1.0, 1.0, 1.0});
  EXPECT_NEAR(focal_heatmap_loss(p, h), 4.0 * 0.25 * std::numbers::ln2, 1e-12);
}

TEST(FocalLoss, BatchedVersionAveragesPerSampleSums) {
  Rng rng(2);
  const Tensor p = random_tensor({3, 1, 4, 4}, rng, 0.05, 0.95);
  Tensor h({3, 1, 4, 4});
  h[0] = h[20] = h[40] = 1.0;
  const double batched = ag::focal_heatmap_loss(ag::Var(p), h, 2.0).value().item();
  EXPECT_NEAR(batched, focal_heatmap_loss(p, h) / 3.0, 1e-12);
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    ag::Var p = ag::Var::parameter(random_tensor({2, 1, 4, 4}, rng, 0.02, 0.98));
    Tensor h = random_tensor({2, 1, 4, 4}, rng, 0.0, 0.9);
    h[rng.index(16)] = 1.0;
    h[16 + rng.index(16)] = 1.0;
    auto f = [&] { return ag::focal_heatmap_loss(p, h, 2.0); };
    EXPECT_LT(max_fd_error(f, {p}, rng, 32), 1e-4);
  }
}

TEST(FocalLoss, ShapeMismatchThrows) {
  EXPECT_THROW(focal_heatmap_loss(Tensor({2}), Tensor({3})), Error);
}

TEST(ConsistencyLoss, HalfEverywhereIsLn2) {
  const Tensor half = Tensor::full({16, 16}, 0.5);
  EXPECT_NEAR(consistency_loss(half, half), std::numbers::ln2, 1e-12);
}

TEST(ConsistencyLoss, PerfectBinaryPredictionIsNearZero) {
  const Tensor c({4}, {0.0, 1.0, 1.0, 0.0});
  EXPECT_LT(consistency_loss(c, c), 1e-6);
}

TEST(ConsistencyLoss, GradientVanishesAtSoftTarget) {
  Rng rng(4);
  const Tensor c = random_tensor({10}, rng, 0.1, 0.9);
  const Tensor g = consistency_loss_grad(c, c);
  EXPECT_LT(std::max(std::abs(g.min()), std::abs(g.max())), 1e-12);
}

TEST(ConsistencyLoss, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    ag::Var p = ag::Var::parameter(random_tensor({2, 1, 4, 4}, rng, 0.02, 0.98));
    const Tensor c = random_tensor({2, 1, 4, 4}, rng, 0.0, 1.0);
    auto f = [&] { return ag::consistency_loss(p, c); };
    EXPECT_LT(max_fd_error(f, {p}, rng, 32), 1e-4);
  }
}

TEST(ClassificationLoss, ZeroLogitIsLn2) {
  EXPECT_NEAR(classification_loss(0.0, 1.0), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(classification_loss(0.0, 0.0), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(classification_loss(40.0, 1.0), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(classification_loss(std::numeric_limits<double>::infinity(), 1.0), 0.0);
  EXPECT_DOUBLE_EQ(smoothed_target(1.0, 0.1), 0.9);
}

TEST(ClassificationLoss, BatchedGradient) {
  Rng rng(6);
  ag::Var z = ag::Var::parameter(random_tensor({6}, rng, -3, 3));
  const std::vector<double> y{0, 1, 1, 0, 1, 0};
  auto f = [&] { return ag::classification_loss(z, y, 0.1); };
  EXPECT_LT(max_fd_error(f, {z}, rng, 6), 1e-6);
}

TEST(TotalLoss, Weights) {
  EXPECT_DOUBLE_EQ(laa_net_total(1.0, 1.0, 1.0), 111.0);
  EXPECT_DOUBLE_EQ(laa_net_total(0.5, 0.0, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(laa_former_total(1.0, 1.0), 11.0);
  LossConfig cfg;
  const ag::Var a(Tensor::scalar(1.0));
  EXPECT_DOUBLE_EQ(ag::laa_net_total(a, a, a, cfg).value().item(), 111.0);
  EXPECT_DOUBLE_EQ(ag::laa_net_total(a, ag::Var(), ag::Var(), cfg).value().item(), 1.0);
  EXPECT_DOUBLE_EQ(ag::laa_former_total(a, a, cfg).value().item(), 11.0);
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.gamma = -1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = LossConfig{};
  cfg.label_smoothing = 0.5;
  EXPECT_THROW(cfg.validate(), Error);
}
