#include <gtest/gtest.h>

#include <cmath>

#include "adists/local_stats.hpp"
#include "adists/reference.hpp"
#include "support.hpp"

namespace adists {
namespace {

using test::random_tensor;

void expect_stats_near(const LocalStatistics<double>& got, const LocalStatistics<double>& want,
                       double tol) {
  ASSERT_EQ(got.mu_x.shape(), want.mu_x.shape());
  const std::pair<const TensorD*, const TensorD*> maps[] = {
      {&got.mu_x, &want.mu_x},   {&got.mu_y, &want.mu_y},    {&got.var_x, &want.var_x},
      {&got.var_y, &want.var_y}, {&got.cov_xy, &want.cov_xy}};
  for (const auto& [g, w] : maps) {
    for (std::size_t i = 0; i < g->size(); ++i) ASSERT_NEAR((*g)[i], (*w)[i], tol);
  }
}

TEST(WindowSpec, RejectsEvenOrTinyWindows) {
  EXPECT_THROW((WindowSpec{4, 5}.validate()), UsageError);
  EXPECT_THROW((WindowSpec{1, 1}.validate()), UsageError);
  EXPECT_NO_THROW((WindowSpec{3, 21}.validate()));
}

TEST(WindowedStats, ConstantChannel) {
  const TensorD a({2, 25, 30}, 0.37);
  const auto s = windowed_stats(a, a, WindowSpec{});
  ASSERT_EQ(s.mu_x.shape(), (Shape{2, 5, 10}));
  for (std::size_t i = 0; i < s.mu_x.size(); ++i) {
    EXPECT_NEAR(s.mu_x[i], 0.37, 1e-12);
    EXPECT_EQ(s.var_x[i], 0.0);
    EXPECT_EQ(s.cov_xy[i], 0.0);
  }
}

TEST(WindowedStats, SelfCovarianceEqualsVariance) {
  const TensorD a = random_tensor<double>({3, 30, 30}, 1);
  const auto s = windowed_stats(a, a, WindowSpec{});
  for (std::size_t i = 0; i < s.var_x.size(); ++i) {
    EXPECT_NEAR(s.var_x[i], s.var_y[i], 1e-6);
    EXPECT_NEAR(s.var_x[i], s.cov_xy[i], 1e-6);
  }
}

TEST(WindowedStats, ThirtyByThirtyPairMatchesBruteForce) {
  const TensorD a = random_tensor<double>({1, 30, 30}, 2), b = random_tensor<double>({1, 30, 30}, 3);
  const auto got = windowed_stats(a, b, WindowSpec{});
  ASSERT_EQ(got.mu_x.shape(), (Shape{1, 10, 10}));
  expect_stats_near(got, reference::windowed_stats(a, b, WindowSpec{}), 1e-5);
}

TEST(WindowedStats, FastPathMatchesOracleAcrossSeeds) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim(3, 40), win(1, 6);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Shape shape{1 + seed % 3, dim(rng), dim(rng)};
    const WindowSpec window{2 * win(rng) + 1, 2 * win(rng) + 1};
    const TensorD a = random_tensor<double>(shape, 10 + seed, -10.0, 10.0);
    const TensorD b = random_tensor<double>(shape, 90 + seed, -10.0, 10.0);
    expect_stats_near(windowed_stats(a, b, window), reference::windowed_stats(a, b, window),
                      1e-5);
  }
}

TEST(WindowedStats, FloatPathMatchesOracle) {
  const Tensor a = random_tensor({4, 33, 27}, 5, 0.0, 10.0), b = random_tensor({4, 33, 27}, 6, 0.0, 10.0);
  const auto got = windowed_stats(a, b, WindowSpec{});
  const auto want = reference::windowed_stats(a.cast<double>(), b.cast<double>(), WindowSpec{});
  for (std::size_t i = 0; i < got.var_x.size(); ++i) {
    ASSERT_NEAR(got.mu_x[i], want.mu_x[i], 1e-5);
    ASSERT_NEAR(got.var_x[i], want.var_x[i], 1e-4);
    ASSERT_NEAR(got.cov_xy[i], want.cov_xy[i], 1e-4);
  }
}

TEST(WindowedStats, LargeOffsetStaysAccurate) {
  TensorD a = random_tensor<double>({1, 40, 40}, 7);
  for (auto& v : a.values()) v += 5e3;
  const auto got = windowed_stats(a, a, WindowSpec{});
  const auto want = reference::windowed_stats(a, a, WindowSpec{});
  for (std::size_t i = 0; i < got.var_x.size(); ++i) ASSERT_NEAR(got.var_x[i], want.var_x[i], 1e-6);
}

TEST(WindowedStats, WindowClampsToSmallMaps) {
  const TensorD a = random_tensor<double>({2, 16, 9}, 8), b = random_tensor<double>({2, 16, 9}, 9);
  const auto got = windowed_stats(a, b, WindowSpec{});
  ASSERT_EQ(got.mu_x.shape(), (Shape{2, 1, 1}));
  EXPECT_EQ(got.window_h, 16u);
  EXPECT_EQ(got.window_w, 9u);
  expect_stats_near(got, reference::windowed_stats(a, b, WindowSpec{}), 1e-10);
  const TensorD tiny = random_tensor<double>({1, 1, 1}, 10);
  EXPECT_EQ(windowed_stats(tiny, tiny, WindowSpec{}).var_x[0], 0.0);
}

TEST(WindowedStats, ShapeMismatchIsRejected) {
  EXPECT_THROW(windowed_stats(TensorD({1, 5, 5}), TensorD({1, 5, 6}), WindowSpec{3, 3}),
               ShapeError);
}

TEST(WindowedStats, VarianceFloorAndCauchySchwarz) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TensorD a = random_tensor<double>({2, 28, 28}, 20 + seed, -3.0, 3.0);
    const TensorD b = random_tensor<double>({2, 28, 28}, 40 + seed, -3.0, 3.0);
    const auto s = windowed_stats(a, b, WindowSpec{5, 7});
    for (std::size_t i = 0; i < s.var_x.size(); ++i) {
      ASSERT_GE(s.var_x[i], 0.0);
      ASSERT_GE(s.var_y[i], 0.0);
      ASSERT_LE(std::abs(s.cov_xy[i]), std::sqrt(s.var_x[i] * s.var_y[i]) + 1e-5);
    }
  }
}

TEST(WindowedStats, ConstantShiftMovesOnlyTheMean) {
  const TensorD a = random_tensor<double>({2, 30, 30}, 11), b = random_tensor<double>({2, 30, 30}, 12);
  TensorD shifted = a;
  for (auto& v : shifted.values()) v += 2.5;
  const auto s0 = windowed_stats(a, b, WindowSpec{});
  const auto s1 = windowed_stats(shifted, b, WindowSpec{});
  for (std::size_t i = 0; i < s0.mu_x.size(); ++i) {
    EXPECT_NEAR(s1.mu_x[i], s0.mu_x[i] + 2.5, 1e-5);
    EXPECT_NEAR(s1.var_x[i], s0.var_x[i], 1e-5);
    EXPECT_NEAR(s1.cov_xy[i], s0.cov_xy[i], 1e-5);
  }
}

TEST(WindowedStats, ScalingScalesSecondMoments) {
  const TensorD a = random_tensor<double>({2, 30, 30}, 13), b = random_tensor<double>({2, 30, 30}, 14);
  const double k = -3.5;
  TensorD scaled = a;
  for (auto& v : scaled.values()) v *= k;
  const auto s0 = windowed_stats(a, b, WindowSpec{});
  const auto s1 = windowed_stats(scaled, b, WindowSpec{});
  for (std::size_t i = 0; i < s0.mu_x.size(); ++i) {
    EXPECT_NEAR(s1.var_x[i], k * k * s0.var_x[i], 1e-5 * std::max(1.0, k * k * s0.var_x[i]));
    EXPECT_NEAR(s1.cov_xy[i], k * s0.cov_xy[i], 1e-5 * std::max(1.0, std::abs(k * s0.cov_xy[i])));
  }
}

TEST(WindowedMoments, AgreesWithPairStatistics) {
  const TensorD a = random_tensor<double>({3, 26, 31}, 15);
  const auto m = windowed_moments(a, WindowSpec{});
  const auto s = windowed_stats(a, a, WindowSpec{});
  for (std::size_t i = 0; i < m.mean.size(); ++i) {
    EXPECT_NEAR(m.mean[i], s.mu_x[i], 1e-12);
    EXPECT_NEAR(m.variance[i], s.var_x[i], 1e-12);
  }
}

TEST(BoxMean, MatchesReferenceAndAdjoint) {
  const TensorD a = random_tensor<double>({2, 19, 23}, 16);
  const TensorD got = box_mean(a, 5, 7);
  const TensorD want = reference::box_mean(a, 5, 7);
  for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  // <box(a), g> == <a, box^T(g)>
  const TensorD g = random_tensor<double>(got.shape(), 17);
  const TensorD back = box_mean_backward(g, 5, 7, a.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) lhs += got[i] * g[i];
  for (std::size_t i = 0; i < a.size(); ++i) rhs += a[i] * back[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

}  // namespace
}  // namespace adists
