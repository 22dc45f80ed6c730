#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "adists/correlation.hpp"
#include "adists/error.hpp"
#include "adists/reference.hpp"

namespace adists {
namespace {

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> with_ties(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 5);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(Pearson, RejectsDegenerateInput) {
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), DataError);
  EXPECT_THROW(pearson(std::vector<double>{1, NAN}, std::vector<double>{1, 2}), DataError);
  EXPECT_THROW(srcc(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(krcc(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), DataError);
}

TEST(Ranks, TiesShareTheAveragePosition) {
  const auto r = average_ranks(std::vector<double>{10, 20, 10, 30, 20, 20});
  const std::vector<double> want{1.5, 4, 1.5, 6, 4, 4};
  EXPECT_EQ(r, want);
}

TEST(RankCorrelation, MonotoneTransformGivesExactlyOne) {
  const auto mos = uniform(40, 1);
  std::vector<double> pred(mos.size());
  std::transform(mos.begin(), mos.end(), pred.begin(), [](double m) { return std::exp(3 * m) - 7; });
  EXPECT_EQ(srcc(pred, mos), 1.0);
  EXPECT_EQ(krcc(pred, mos), 1.0);
}

TEST(RankCorrelation, ReversedRanksGiveMinusOne) {
  const auto mos = uniform(25, 2);
  std::vector<double> pred(mos.size());
  std::transform(mos.begin(), mos.end(), pred.begin(), [](double m) { return -m; });
  EXPECT_EQ(srcc(pred, mos), -1.0);
  EXPECT_EQ(krcc(pred, mos), -1.0);
}

TEST(RankCorrelation, MatchesPairwiseOracle) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const bool tied = seed % 2 == 1;
    const auto a = tied ? with_ties(20, seed) : uniform(20, seed);
    const auto b = tied ? with_ties(20, seed + 500) : uniform(20, seed + 500);
    EXPECT_NEAR(srcc(a, b), reference::srcc(a, b), 1e-12) << "seed " << seed;
    EXPECT_NEAR(krcc(a, b), reference::krcc(a, b), 1e-12) << "seed " << seed;
  }
}

TEST(RankCorrelation, InvariantUnderIncreasingTransforms) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = uniform(30, seed, -2.0, 2.0), b = with_ties(30, seed + 40);
    std::vector<double> ta(a.size()), tb(b.size());
    std::transform(a.begin(), a.end(), ta.begin(), [](double v) { return std::atan(v) * 5 + 1; });
    std::transform(b.begin(), b.end(), tb.begin(), [](double v) { return v * v * v + 2 * v; });
    EXPECT_NEAR(srcc(ta, tb), srcc(a, b), 1e-12);
    EXPECT_NEAR(krcc(ta, tb), krcc(a, b), 1e-12);
    const double s = srcc(a, b), k = krcc(a, b);
    EXPECT_LE(std::abs(s), 1.0);
    EXPECT_LE(std::abs(k), 1.0);
  }
}

TEST(Logistic4, IsMonotoneWithFloorAndCeiling) {
  const Logistic4 f{5.0, 1.0, 0.3, -0.2};
  EXPECT_NEAR(f(0.3), 3.0, 1e-12);
  EXPECT_NEAR(f(1e3), 5.0, 1e-9);
  EXPECT_NEAR(f(-1e3), 1.0, 1e-9);
  double prev = -1e300;
  for (double s = -2; s <= 2; s += 0.01) {
    EXPECT_GE(f(s), prev);
    prev = f(s);
  }
}

TEST(Plcc, IdentityGivesOne) {
  const auto mos = uniform(30, 3);
  EXPECT_NEAR(plcc(mos, mos).value, 1.0, 1e-9);
}

TEST(Plcc, RecoversAnExactLogisticTransform) {
  const auto pred = uniform(50, 4, -3.0, 3.0);
  const Logistic4 truth{80.0, 10.0, 0.4, 0.7};
  std::vector<double> mos(pred.size());
  std::transform(pred.begin(), pred.end(), mos.begin(), [&](double s) { return truth(s); });
  const PlccResult r = plcc(pred, mos);
  EXPECT_NEAR(r.value, 1.0, 1e-6);
  EXPECT_FALSE(r.fallback);
  EXPECT_LT(r.raw_pearson, r.value);
}

TEST(Plcc, IndependentDataIsUncorrelated) {
  const auto pred = uniform(1000, 5), mos = uniform(1000, 6);
  EXPECT_LT(std::abs(plcc(pred, mos).value), 0.1);
}

TEST(Plcc, NeverWorseThanRawPearson) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pred = uniform(40, 100 + seed);
    auto mos = uniform(40, 200 + seed);
    for (std::size_t i = 0; i < mos.size(); ++i) mos[i] += (seed % 4) * pred[i] * pred[i];
    const PlccResult r = plcc(pred, mos, seed);
    EXPECT_GE(r.value, r.raw_pearson - 1e-9) << "seed " << seed;
    EXPECT_LE(std::abs(r.value), 1.0);
  }
}

TEST(Plcc, SmallSamplesFallBackToPearson) {
  const std::vector<double> pred{1, 2, 3, 4}, mos{1, 3, 2, 5};
  const PlccResult r = plcc(pred, mos);
  EXPECT_TRUE(r.fallback);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_DOUBLE_EQ(r.value, pearson(pred, mos));
  EXPECT_THROW(fit_logistic4(pred, mos), DataError);
  EXPECT_THROW(plcc(std::vector<double>(6, 1.0), uniform(6, 7)), DataError);
}

TEST(Plcc, FitIsDeterministicForASeed) {
  const auto pred = uniform(30, 8), mos = uniform(30, 9);
  const auto a = fit_logistic4(pred, mos, 3), b = fit_logistic4(pred, mos, 3);
  EXPECT_EQ(a.params.a, b.params.a);
  EXPECT_EQ(a.params.d, b.params.d);
  EXPECT_EQ(a.sse, b.sse);
  EXPECT_EQ(a.starts, 8u);
}

TEST(TwoAfc, UnanimousAgreementScoresOne) {
  const std::vector<TwoAfcRecord> recs{{1.0, 0.1, 0.5}, {0.0, 0.9, 0.2}, {1.0, 0.0, 0.3}};
  EXPECT_DOUBLE_EQ(two_afc_score(recs), 1.0);
}

TEST(TwoAfc, IndifferentHumansScoreOneHalf) {
  const std::vector<TwoAfcRecord> recs{{0.5, 0.1, 0.5}, {0.5, 0.9, 0.2}, {0.5, 0.4, 0.4}};
  EXPECT_DOUBLE_EQ(two_afc_score(recs), 0.5);
}

TEST(TwoAfc, MixedSetMatchesHandSum) {
  const std::vector<TwoAfcRecord> recs{
      {0.8, 0.1, 0.2},   // rhat 1: 0.8
      {0.3, 0.1, 0.2},   // rhat 1: 0.3
      {0.6, 0.5, 0.2},   // rhat 0: 0.4
      {0.9, 0.25, 0.25}  // tie: 0.5
  };
  EXPECT_DOUBLE_EQ(two_afc_score(recs), (0.8 + 0.3 + 0.4 + 0.5) / 4.0);
}

TEST(TwoAfc, HumanCeilingWhenModelFollowsMajority) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TwoAfcRecord> recs;
  double ceiling = 0.0;
  for (int i = 0; i < 200; ++i) {
    double r = u(rng);
    if (r == 0.5) r = 0.6;
    recs.push_back({r, r > 0.5 ? 0.1 : 0.9, 0.5});
    ceiling += std::max(r, 1.0 - r);
  }
  const double score = two_afc_score(recs);
  EXPECT_NEAR(score, ceiling / recs.size(), 1e-12);
  EXPECT_GE(score, 0.0);
  EXPECT_LE(score, 1.0);
}

TEST(TwoAfc, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(two_afc_score({}), DataError);
  const std::vector<TwoAfcRecord> bad{{1.5, 0.0, 1.0}};
  EXPECT_THROW(two_afc_score(bad), DataError);
}

}  // namespace
}  // namespace adists
