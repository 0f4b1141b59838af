#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fkan/tape.hpp"
#include "oracles.hpp"

using fkan::Array2;
using fkan::Tape;
using fkan::Var;
namespace ops = fkan::ops;

TEST(MatmulAdd, IdentityWeight) {
  Tape t;
  Array2 z(2, 1);
  z << 1, 2;
  Var y = ops::matmul_add(t, t.constant(Array2::Identity(2, 2)), t.constant(z),
                          t.constant(Array2::Zero(2, 1)));
  EXPECT_EQ(t.value(y)(0, 0), 1.0);
  EXPECT_EQ(t.value(y)(1, 0), 2.0);
}

TEST(MatmulAdd, ZeroWeightReturnsBias) {
  Tape t;
  Array2 b(2, 1);
  b << 3, 4;
  std::mt19937_64 rng(1);
  Var y = ops::matmul_add(t, t.constant(Array2::Zero(2, 5)),
                          t.constant(oracle::random_array(rng, 5, 1)), t.constant(b));
  EXPECT_EQ(t.value(y)(0, 0), 3.0);
  EXPECT_EQ(t.value(y)(1, 0), 4.0);
}

TEST(MatmulAdd, MatchesLoopOracle) {
  std::mt19937_64 rng(7);
  const Array2 W = oracle::random_array(rng, 3, 2);
  const Array2 z = oracle::random_array(rng, 2, 1);
  const Array2 b = oracle::random_array(rng, 3, 1);
  Tape t;
  Var y = ops::matmul_add(t, t.constant(W), t.constant(z), t.constant(b));
  EXPECT_LT((t.value(y) - oracle::matmul_add(W, z, b)).cwiseAbs().maxCoeff(), 1e-12);

  // Broadcast bias over a batch.
  const Array2 zb = oracle::random_array(rng, 2, 6);
  Tape t2;
  Var yb = ops::matmul_add(t2, t2.constant(W), t2.constant(zb), t2.constant(b));
  EXPECT_LT((t2.value(yb) - oracle::matmul_add(W, zb, b)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MatmulAdd, RejectsShapeMismatch) {
  Tape t;
  EXPECT_THROW(ops::matmul_add(t, t.constant(Array2::Zero(3, 2)), t.constant(Array2::Zero(3, 1)),
                               t.constant(Array2::Zero(3, 1))),
               fkan::ShapeError);
  EXPECT_THROW(ops::matmul_add(t, t.constant(Array2::Zero(3, 2)), t.constant(Array2::Zero(2, 4)),
                               t.constant(Array2::Zero(2, 1))),
               fkan::ShapeError);
  try {
    ops::matmul(t, t.constant(Array2::Zero(3, 2)), t.constant(Array2::Zero(5, 1)));
    FAIL();
  } catch (const fkan::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[3 x 2]"), std::string::npos);
  }
}

TEST(TanhScaled, Values) {
  Tape t;
  EXPECT_EQ(t.value(ops::tanh_scaled(t, t.constant(Array2::Zero(1, 1)), 30.0))(0, 0), 0.0);
  EXPECT_NEAR(t.value(ops::tanh_scaled(t, t.constant(Array2::Constant(1, 1, 100.0)), 30.0))(0, 0),
              1.0, 1e-12);
  // tanh(0.3) to 30 digits: 0.291312612451590905818221272824
  EXPECT_NEAR(t.value(ops::tanh_scaled(t, t.constant(Array2::Constant(1, 1, 0.01)), 30.0))(0, 0),
              0.29131261245159090582, 1e-15);
  EXPECT_THROW(ops::tanh_scaled(t, t.constant(Array2::Zero(1, 1)), 0.0), std::invalid_argument);
  EXPECT_THROW(ops::tanh_scaled(t, t.constant(Array2::Zero(1, 1)), -1.0), std::invalid_argument);
}

TEST(TanhScaled, PartialIsOmegaTimesSech2) {
  Tape t;
  const double h = 0.013;
  Var x = t.parameter(Array2::Constant(1, 1, h));
  Var y = ops::tanh_scaled(t, x, 30.0);
  t.backward(y);
  const double th = std::tanh(30.0 * h);
  EXPECT_NEAR(t.gradient(x)(0, 0), 30.0 * (1.0 - th * th), 1e-12);
}

TEST(SinCosFeatures, AtZero) {
  Tape t;
  auto [s, c] = ops::sin_cos_features(t, t.constant(Array2::Zero(1, 1)), 3);
  EXPECT_EQ(t.value(s), Array2::Zero(3, 1));
  EXPECT_EQ(t.value(c), Array2::Ones(3, 1));
}

TEST(SinCosFeatures, QuarterTurn) {
  Tape t;
  auto [s, c] = ops::sin_cos_features(t, t.constant(Array2::Constant(1, 1, std::numbers::pi / 2)), 1);
  EXPECT_NEAR(t.value(s)(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(t.value(c)(0, 0), 0.0, 1e-12);
}

TEST(SinCosFeatures, MatchesScalarLoop) {
  Tape t;
  auto [s, c] = ops::sin_cos_features(t, t.constant(Array2::Constant(1, 1, 0.37)), 5);
  for (int k = 1; k <= 5; ++k) {
    EXPECT_NEAR(t.value(s)(k - 1, 0), std::sin(k * 0.37), 1e-12);
    EXPECT_NEAR(t.value(c)(k - 1, 0), std::cos(k * 0.37), 1e-12);
  }
  // Multi-dimensional layout: row m*K + (k-1), and large K stays accurate.
  std::mt19937_64 rng(3);
  const Array2 x = oracle::random_array(rng, 3, 7, -std::numbers::pi, std::numbers::pi);
  const int K = 250;
  auto [S, C] = ops::harmonics(x, K);
  double worst = 0.0;
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 7; ++n)
      for (int k = 1; k <= K; ++k) {
        worst = std::max(worst, std::abs(S(m * K + k - 1, n) - std::sin(k * x(m, n))));
        worst = std::max(worst, std::abs(C(m * K + k - 1, n) - std::cos(k * x(m, n))));
      }
  EXPECT_LT(worst, 1e-12);
}

TEST(SinCosFeatures, RejectsZeroK) {
  Tape t;
  EXPECT_THROW(ops::sin_cos_features(t, t.constant(Array2::Zero(1, 1)), 0), std::invalid_argument);
}

TEST(SinCosFeatures, InputGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(11);
  const Array2 x0 = oracle::random_array(rng, 2, 3);
  const Array2 ws = oracle::random_array(rng, 8, 3);
  const Array2 wc = oracle::random_array(rng, 8, 3);
  auto loss_at = [&](const Array2& x) {
    auto [S, C] = ops::harmonics(x, 4);
    return (S.array() * ws.array()).sum() + (C.array() * wc.array()).sum();
  };
  // Weighted sum built per sample column from matmul picks.
  Array2 grad = Array2::Zero(2, 3);
  for (int n = 0; n < 3; ++n) {
    Tape tn;
    Var xn = tn.parameter(x0);
    auto [sn, cn] = ops::sin_cos_features(tn, xn, 4);
    Array2 pick_s = Array2::Zero(1, 3);
    pick_s(0, n) = 1.0;
    Var col_s = ops::matmul(tn, sn, tn.constant(pick_s.transpose()));
    Var col_c = ops::matmul(tn, cn, tn.constant(pick_s.transpose()));
    Var ls = ops::matmul(tn, tn.constant(ws.col(n).transpose()), col_s);
    Var lc = ops::matmul_add(tn, tn.constant(wc.col(n).transpose()), col_c, ls);
    tn.backward(lc);
    grad += tn.gradient(xn);
  }
  const double h = 1e-6;
  for (int m = 0; m < 2; ++m)
    for (int n = 0; n < 3; ++n) {
      Array2 up = x0, down = x0;
      up(m, n) += h;
      down(m, n) -= h;
      const double fd = (loss_at(up) - loss_at(down)) / (2 * h);
      EXPECT_NEAR(grad(m, n), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  Tape t;
  Var w = t.parameter(Array2::Ones(2, 2));
  Var c = t.constant(Array2::Constant(1, 1, 5.0));
  t.backward(c);
  EXPECT_EQ(t.gradient(w), Array2::Zero(2, 2));
}

TEST(Backward, LinearCaseOuterProduct) {
  // loss = sum(W z) with z fixed: dL/dW[i][j] = sum_n z[j][n].
  std::mt19937_64 rng(5);
  const Array2 z = oracle::random_array(rng, 3, 4);
  Tape t;
  Var w = t.parameter(oracle::random_array(rng, 2, 3));
  Var loss = ops::sum(t, ops::matmul(t, w, t.constant(z)));
  t.backward(loss);
  const Array2 g = t.gradient(w);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(g(i, j), z.row(j).sum(), 1e-14);
}

TEST(Backward, UnreachableParameterGetsZero) {
  Tape t;
  Var used = t.parameter(Array2::Ones(1, 1));
  Var unused = t.parameter(Array2::Constant(3, 2, 7.0));
  t.backward(ops::scale(t, used, 2.0));
  EXPECT_EQ(t.gradient(used)(0, 0), 2.0);
  EXPECT_EQ(t.gradient(unused), Array2::Zero(3, 2));
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape t;
  Var w = t.parameter(Array2::Ones(2, 1));
  EXPECT_THROW(t.backward(w), fkan::ShapeError);
}

TEST(Backward, SharedNodeAccumulates) {
  // y = sum(x) + sum(x) uses x twice.
  Tape t;
  Var x = t.parameter(Array2::Constant(2, 2, 1.5));
  Var a = ops::sum(t, x);
  Var b = ops::sum(t, x);
  Var y = ops::matmul_add(t, t.constant(Array2::Ones(1, 1)), a, b);
  t.backward(y);
  EXPECT_EQ(t.gradient(x), Array2::Constant(2, 2, 2.0));
}

TEST(Backward, L2LossGradient) {
  std::mt19937_64 rng(9);
  const Array2 p0 = oracle::random_array(rng, 2, 5);
  const Array2 target = oracle::random_array(rng, 2, 5);
  Tape t;
  Var p = t.parameter(p0);
  t.backward(ops::l2_loss(t, p, target));
  EXPECT_LT((t.gradient(p) - (2.0 / 5.0) * (p0 - target)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, HcatSplitsGradient) {
  Tape t;
  Var a = t.parameter(Array2::Ones(2, 1));
  Var b = t.parameter(Array2::Ones(2, 3));
  Array2 w(1, 2);
  w << 2, 3;
  Var y = ops::sum(t, ops::matmul(t, t.constant(w), ops::hcat(t, a, b)));
  t.backward(y);
  Array2 ga(2, 1);
  ga << 2, 3;
  EXPECT_EQ(t.gradient(a), ga);
  EXPECT_EQ(t.gradient(b), ga.replicate(1, 3));
}
