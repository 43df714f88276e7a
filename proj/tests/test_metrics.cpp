#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace laax;

TEST(Auc, WorkedExample) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(s, y), 0.75);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> s(50);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      s[i] = std::round(rng.uniform() * 10.0) / 10.0;
      y[i] = static_cast<int>(i % 2 == 0 || rng.bernoulli(0.3));
    }
    EXPECT_EQ(auc(s, y), oracle::pairwise_auc(s, y));
  }
}

TEST(Auc, LabelFlipComplements) {
  Rng rng(2);
  std::vector<double> s(30);
  std::vector<int> y(30), flipped(30);
  for (std::size_t i = 0; i < 30; ++i) {
    s[i] = rng.uniform();
    y[i] = static_cast<int>(i % 3 == 0);
    flipped[i] = 1 - y[i];
  }
  EXPECT_NEAR(auc(s, y) + auc(s, flipped), 1.0, 1e-12);
}

TEST(Auc, SingleClassIsUndefined) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> y{1, 1};
  try {
    auc(s, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::undefined_metric);
  }
}

TEST(AveragePrecision, Examples) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  EXPECT_DOUBLE_EQ(average_precision(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(s, std::vector<int>{1, 0, 1, 0}), 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
  // Tied scores form one threshold.
  EXPECT_DOUBLE_EQ(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
}

TEST(Ssim, IdenticalIsOne) {
  Rng rng(3);
  const Tensor a = laax::testing::random_tensor({3, 32, 32}, rng, 0, 1);
  Tensor m({32, 32});
  for (std::size_t i = 8; i < 24; ++i)
    for (std::size_t j = 8; j < 24; ++j) m(i, j) = 1.0;
  EXPECT_NEAR(mask_ssim(a, a, m), 1.0, 1e-12);
}

TEST(Ssim, ConstantBlackVersusWhite) {
  const Tensor black({16, 16}), white = Tensor::ones({16, 16});
  const double c1 = 1e-4;
  const Tensor s = ssim_map(black, white);
  EXPECT_NEAR(s.min(), c1 / (1.0 + c1), 1e-12);
  EXPECT_NEAR(s.max(), c1 / (1.0 + c1), 1e-12);
}

TEST(Ssim, EmptyMaskThrows) {
  const Tensor a({8, 8});
  EXPECT_THROW(mask_ssim(a, a, Tensor({8, 8})), Error);
}

TEST(BucketedAuc, EveryRealAgainstEachBucket) {
  const std::vector<double> scores{0.1, 0.2, 0.9, 0.15, 0.8, 0.05};
  const std::vector<int> labels{0, 0, 1, 1, 1, 1};
  const std::vector<double> quality{0, 0, 0.2, 0.5, 0.8, 0.95};
  const std::vector<double> edges{0.0, 0.5, 1.0};
  const auto b = bucketed_auc(scores, labels, quality, edges);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].fakes, 1u);
  EXPECT_DOUBLE_EQ(b[0].auc, 1.0);
  EXPECT_EQ(b[1].fakes, 3u);
  EXPECT_DOUBLE_EQ(b[1].auc, oracle::pairwise_auc(std::vector<double>{0.1, 0.2, 0.15, 0.8, 0.05},
                                                   std::vector<int>{0, 0, 1, 1, 1}));
}
