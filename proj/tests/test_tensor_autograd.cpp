#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace laax;
using laax::testing::max_fd_error;
using laax::testing::random_tensor;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  t(1, 2, 3) = 7.0;
  EXPECT_EQ(t[23], 7.0);
  const Tensor r = t.reshaped({6, 4});
  EXPECT_EQ(r(5, 3), 7.0);
  EXPECT_THROW(t.reshaped({5, 5}), Error);
}

TEST(Tensor, StackAndTranspose) {
  const Tensor a({2}, {1, 2}), b({2}, {3, 4});
  const Tensor s = stack({a, b});
  EXPECT_EQ(s.shape(), (Shape{2, 2}));
  const Tensor t = transpose2d(s);
  EXPECT_EQ(t(0, 1), 3.0);
  EXPECT_EQ(t(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(transpose2d(t), s), 0.0);
}

TEST(Autograd, ElementwiseChain) {
  Rng rng(1);
  ag::Var a = ag::Var::parameter(random_tensor({3, 4}, rng));
  ag::Var b = ag::Var::parameter(random_tensor({3, 4}, rng));
  auto f = [&] {
    return ag::sum(ag::mul(ag::silu(ag::add(a, b)), ag::gelu(ag::sub(a, ag::sigmoid(b)))));
  };
  EXPECT_LT(max_fd_error(f, {a, b}, rng, 12), 1e-6);
}

TEST(Autograd, PowAndRelu) {
  Rng rng(2);
  ag::Var a = ag::Var::parameter(random_tensor({10}, rng, 0.1, 1.0));
  auto f = [&] { return ag::sum(ag::add(ag::pow_scalar(a, 2.5), ag::relu(ag::affine(a, 2.0, -1.0)))); };
  EXPECT_LT(max_fd_error(f, {a}, rng, 10), 1e-6);
}

TEST(Autograd, ShapeOps) {
  Rng rng(3);
  ag::Var a = ag::Var::parameter(random_tensor({2, 3, 4}, rng));
  ag::Var w = ag::Var::parameter(random_tensor({2, 3, 4}, rng));
  auto f = [&] {
    ag::Var p = ag::permute(a, {2, 0, 1});
    ag::Var s = ag::slice(ag::reshape(p, {4, 6}), 1, 1, 4);
    ag::Var c = ag::concat({s, ag::slice(ag::reshape(a, {4, 6}), 1, 0, 2)}, 1);
    return ag::sum(ag::mul(ag::reshape(c, {2, 3, 4}), w));
  };
  EXPECT_LT(max_fd_error(f, {a, w}, rng, 24), 1e-6);
}

TEST(Autograd, LinearBmmSoftmax) {
  Rng rng(4);
  ag::Var x = ag::Var::parameter(random_tensor({2, 5, 6}, rng));
  ag::Var w = ag::Var::parameter(random_tensor({6, 4}, rng));
  ag::Var b = ag::Var::parameter(random_tensor({4}, rng));
  auto f = [&] {
    ag::Var y = ag::linear(x, w, b);
    ag::Var att = ag::softmax(ag::bmm(y, y, true));
    return ag::sum(ag::mul(ag::bmm(att, y), ag::bmm(att, y)));
  };
  EXPECT_LT(max_fd_error(f, {x, w, b}, rng, 16), 1e-6);
}

TEST(Autograd, Normalizations) {
  Rng rng(5);
  ag::Var x = ag::Var::parameter(random_tensor({2, 4, 3, 3}, rng));
  ag::Var g = ag::Var::parameter(random_tensor({4}, rng));
  ag::Var be = ag::Var::parameter(random_tensor({4}, rng));
  ag::Var t = ag::Var::parameter(random_tensor({2, 3, 4}, rng));
  ag::Var w = ag::Var(random_tensor({2, 4, 3, 3}, rng));
  auto f = [&] {
    ag::Var gn = ag::group_norm(x, 2, g, be);
    ag::Var ln = ag::layer_norm(t, g, be);
    return ag::add(ag::sum(ag::mul(gn, w)), ag::sum(ag::mul(ln, ln)));
  };
  EXPECT_LT(max_fd_error(f, {x, g, be, t}, rng, 16), 1e-5);
}

TEST(Autograd, Convolutions) {
  Rng rng(6);
  ag::Var x = ag::Var::parameter(random_tensor({2, 3, 6, 6}, rng));
  ag::Var w = ag::Var::parameter(random_tensor({4, 3, 3, 3}, rng));
  ag::Var b = ag::Var::parameter(random_tensor({4}, rng));
  ag::Var wt = ag::Var::parameter(random_tensor({4, 2, 2, 2}, rng));
  ag::Var bt = ag::Var::parameter(random_tensor({2}, rng));
  auto f = [&] {
    ag::Var y = ag::conv2d(x, w, b, 2, 1);
    ag::Var z = ag::conv_transpose2d(y, wt, bt, 2);
    return ag::add(ag::sum(ag::mul(z, z)), ag::sum(ag::global_avg_pool(y)));
  };
  EXPECT_LT(max_fd_error(f, {x, w, b, wt, bt}, rng, 16), 1e-6);
}

TEST(Autograd, Broadcasting) {
  Rng rng(7);
  ag::Var x = ag::Var::parameter(random_tensor({2, 3, 4}, rng));
  ag::Var y = ag::Var::parameter(random_tensor({3, 4}, rng));
  ag::Var c = ag::Var::parameter(random_tensor({4}, rng));
  auto f = [&] {
    ag::Var s = ag::add_broadcast(x, y);
    ag::Var e = ag::expand_leading(c, 3);
    return ag::sum(ag::mul(s, ag::add_broadcast(s, e)));
  };
  EXPECT_LT(max_fd_error(f, {x, y, c}, rng, 12), 1e-6);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  ag::Var a = ag::Var::parameter(Tensor({2}, {1.0, 2.0}));
  ag::NoGradGuard guard;
  const ag::Var y = ag::mul(a, a);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  ag::Var a = ag::Var::parameter(Tensor({1}, {3.0}));
  ag::sum(ag::mul(a, a)).backward();
  ag::sum(ag::mul(a, a)).backward();
  EXPECT_DOUBLE_EQ(a.grad()[0], 12.0);
  a.zero_grad();
  EXPECT_FALSE(a.has_grad());
}
