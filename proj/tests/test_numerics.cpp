#include "fermat/numerics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace fermat;

TEST(LogSumExp, MatchesNaiveSumInSafeRange) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + rng.below(20));
    double naive = 0.0;
    for (double &x : v) {
      x = rng.uniform(-20.0, 20.0);
      naive += std::exp(x);
    }
    EXPECT_NEAR(log_sum_exp(v), std::log(naive), 1e-12 * std::abs(std::log(naive)) + 1e-14);
  }
}

TEST(LogSumExp, HugeMagnitudesDoNotOverflow) {
  EXPECT_DOUBLE_EQ(log_sum_exp({1000.0, 1000.0}), 1000.0 + std::log(2.0));
  EXPECT_DOUBLE_EQ(log_sum_exp({-1000.0, -1000.0}), -1000.0 + std::log(2.0));
  EXPECT_DOUBLE_EQ(log_add(800.0, 0.0), 800.0);
}

TEST(LogSumExp, NegativeInfinity) {
  EXPECT_EQ(log_sum_exp({kNegInf, kNegInf}), kNegInf);
  EXPECT_DOUBLE_EQ(log_sum_exp({kNegInf, 2.0}), 2.0);
  EXPECT_EQ(log_add(kNegInf, kNegInf), kNegInf);
  EXPECT_DOUBLE_EQ(log_add(kNegInf, -3.0), -3.0);
}

TEST(LogSumExp, EmptyThrows) {
  std::vector<double> empty;
  EXPECT_THROW(log_sum_exp(empty), Error);
  try {
    log_sum_exp(empty);
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("empty reduction"), std::string::npos);
  }
}

TEST(LogSumExp, AccumulatorAgreesWithBatch) {
  Rng rng(11);
  std::vector<double> v(500);
  LogSumAccumulator acc;
  for (double &x : v) {
    x = rng.uniform(-700.0, 700.0);
    acc.add(x);
  }
  EXPECT_NEAR(acc.value(), log_sum_exp(v), 1e-12 * std::abs(acc.value()));
  LogSumAccumulator none;
  EXPECT_EQ(none.value(), kNegInf);
}

TEST(LogScalar, AdditionIsLogAdd) {
  const LogScalar a{std::log(2.0)}, b{std::log(5.0)};
  EXPECT_NEAR((a + b).value, std::log(7.0), 1e-15);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c();
    EXPECT_EQ(x, y);
    differs |= x != z;
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, ChildStreamsDoNotAdvanceParent) {
  Rng parent(7);
  Rng copy(7);
  Rng c1 = parent.child(1), c1b = parent.child(1), c2 = parent.child(2);
  EXPECT_EQ(parent(), copy());
  int equal = 0;
  for (int i = 0; i < 64; ++i) {
    const auto x = c1();
    EXPECT_EQ(x, c1b());
    equal += x == c2();
  }
  EXPECT_EQ(equal, 0);
}

TEST(Rng, BelowIsUniform) {
  // chi-square against 10 equal bins; 99.9% critical value for 9 dof is 27.9
  Rng rng(5);
  std::vector<int> bins(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    ++bins[rng.below(10)];
  double chi2 = 0.0;
  for (int b : bins)
    chi2 += (b - n / 10.0) * (b - n / 10.0) / (n / 10.0);
  EXPECT_LT(chi2, 27.9);
  EXPECT_THROW(rng.below(0), Error);
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  const int n = 200000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(s4 / n, 3.0, 0.1);
}

TEST(Rng, GammaMeanAndVariance) {
  Rng rng(13);
  for (double shape : {0.4, 1.0, 2.5, 12.5}) {
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = rng.gamma(shape);
      ASSERT_GT(g, 0.0);
      s += g;
      s2 += g * g;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, shape, 5.0 * std::sqrt(shape / n)) << shape;
    EXPECT_NEAR(var, shape, 0.05 * shape + 0.01) << shape;
  }
  EXPECT_THROW(rng.gamma(0.0), Error);
}

TEST(Shuffle, IsAPermutationAndSeeded) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng a(1), b(1);
  const auto s1 = shuffled(v, a), s2 = shuffled(v, b);
  EXPECT_EQ(s1, s2);
  EXPECT_NE(s1, v);
  auto sorted = s1;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, v);
}

TEST(FiniteDiff, GradientOfQuadratic) {
  Vector x(3);
  x << 0.3, -1.2, 2.0;
  auto f = [](const Vector &y) { return y[0] * y[0] + 3.0 * y[1] * y[2] + std::sin(y[2]); };
  const Vector g = finite_diff_gradient(f, x);
  EXPECT_NEAR(g[0], 0.6, 1e-8);
  EXPECT_NEAR(g[1], 6.0, 1e-8);
  EXPECT_NEAR(g[2], -3.6 + std::cos(2.0), 1e-8);
}

TEST(FiniteDiff, NonFiniteEvaluationThrowsWithPoint) {
  Vector x = Vector::Zero(2);
  auto f = [](const Vector &y) { return y[0] > 0.0 ? std::log(-1.0) : 0.0; };
  try {
    finite_diff_gradient(f, x);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError &e) {
    EXPECT_GT(e.point()[0], 0.0);
  }
  EXPECT_THROW(finite_diff_gradient(f, x, 0.0), Error);
}
