#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "adists/backbone.hpp"
#include "adists/kernels.hpp"
#include "adists/synthetic.hpp"
#include "support.hpp"

namespace adists {
namespace {

using test::backbone;

TEST(Renormalize, ThreeFourBiasTen) {
  WeightArchive a;
  a.add("conv1_1.weight", Tensor({1, 2, 1, 1}, std::vector<float>{3, 4}));
  a.add("conv1_1.bias", Tensor({1}, 10.0f));
  a.add("input.mean", Tensor({3}, 0.5f));
  const WeightArchive r = renormalize_filters(a);
  EXPECT_NEAR(r.at("conv1_1.weight")[0], 0.6f, 1e-7);
  EXPECT_NEAR(r.at("conv1_1.weight")[1], 0.8f, 1e-7);
  EXPECT_NEAR(r.at("conv1_1.bias")[0], 2.0f, 1e-6);
  EXPECT_EQ(r.at("input.mean"), a.at("input.mean"));
}

TEST(Renormalize, UnitNormFilterIsUnchanged) {
  const float v = static_cast<float>(1.0 / std::sqrt(3.0));
  WeightArchive a;
  a.add("conv2_1.weight", Tensor({1, 3, 1, 1}, v));
  a.add("conv2_1.bias", Tensor({1}, 0.25f));
  const WeightArchive r = renormalize_filters(a);
  for (float w : r.at("conv2_1.weight").values()) EXPECT_NEAR(w, v, 1e-7);
  EXPECT_NEAR(r.at("conv2_1.bias")[0], 0.25f, 1e-7);
}

TEST(Renormalize, RandomArchiveHasUnitNormFilters) {
  for (std::uint64_t seed : {3u, 4u}) {
    const WeightArchive r = renormalize_filters(synthetic::make_archive(seed, false));
    std::size_t checked = 0;
    for (const auto& [name, t] : r.entries()) {
      if (!name.ends_with(".weight")) continue;
      const std::size_t per = t.size() / t.dim(0);
      for (std::size_t o = 0; o < t.dim(0); ++o) {
        double sq = 0.0;
        for (std::size_t i = 0; i < per; ++i) sq += double(t[o * per + i]) * t[o * per + i];
        EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6) << name << " filter " << o;
        ++checked;
      }
    }
    EXPECT_EQ(checked, 2 * 64 + 2 * 128 + 3 * 256 + 6 * 512u);
  }
}

TEST(Renormalize, ZeroFilterIsRejected) {
  WeightArchive a;
  a.add("conv1_1.weight", Tensor({2, 1, 1, 1}, std::vector<float>{1, 0}));
  a.add("conv1_1.bias", Tensor({2}, 0.0f));
  EXPECT_THROW(renormalize_filters(a), DataError);
}

TEST(Backbone, ConfigChannelCounts) {
  const BackboneConfig config;
  const std::size_t want[] = {3, 64, 128, 256, 512, 512};
  for (std::size_t i = 0; i < kNumPyramidLevels; ++i) EXPECT_EQ(config.channels(i), want[i]);
  EXPECT_EQ(config.total_channels(), 1475u);
}

TEST(Backbone, IncompleteArchiveIsRejectedWithProblems) {
  WeightArchive a = synthetic::make_archive(0, false);
  WeightArchive missing;
  for (const auto& [name, t] : a.entries()) {
    if (name != "conv3_2.bias") missing.add(name, t);
  }
  const auto problems = validate_backbone_archive(missing);
  ASSERT_FALSE(problems.empty());
  EXPECT_NE(problems.front().find("conv3_2.bias"), std::string::npos);
  EXPECT_THROW(Backbone{missing}, DataError);
  EXPECT_TRUE(validate_backbone_archive(a).empty());
}

TEST(Backbone, PyramidShapesFollowCeilHalving) {
  const Tensor img = synthetic::natural_like_image(1, 45, 70);
  const auto pyr = backbone().extract(img);
  ASSERT_EQ(pyr.levels(), kNumPyramidLevels);
  EXPECT_EQ(pyr.stages[0], img);
  EXPECT_EQ(pyr.stages[1].shape(), (Shape{64, 45, 70}));
  for (std::size_t i = 2; i < kNumPyramidLevels; ++i) {
    EXPECT_EQ(pyr.stages[i].channels(), backbone().config().channels(i));
    EXPECT_EQ(pyr.stages[i].height(), (pyr.stages[i - 1].height() + 1) / 2);
    EXPECT_EQ(pyr.stages[i].width(), (pyr.stages[i - 1].width() + 1) / 2);
  }
}

TEST(Backbone, FeaturesAreNonNegativeAndFinite) {
  const auto pyr = backbone().extract(synthetic::natural_like_image(2, 64, 64));
  for (std::size_t i = 1; i < pyr.levels(); ++i) {
    for (float v : pyr.stages[i].values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_TRUE(std::isfinite(v));
    }
  }
}

TEST(Backbone, ZeroImageGivesSpatiallyConstantStages) {
  const auto pyr = backbone().extract(Tensor({3, 288, 288}, 0.0f));
  // Zero padding reaches this many rows in from the border at each stage.
  const std::size_t margin[] = {0, 2, 4, 6, 7, 8};
  for (std::size_t i = 1; i < pyr.levels(); ++i) {
    const Tensor& f = pyr.stages[i];
    ASSERT_GT(f.height(), 2 * margin[i]);
    for (std::size_t c = 0; c < f.channels(); ++c) {
      const float centre = f.at(c, f.height() / 2, f.width() / 2);
      for (std::size_t y = margin[i]; y + margin[i] < f.height(); ++y) {
        for (std::size_t x = margin[i]; x + margin[i] < f.width(); ++x) {
          ASSERT_NEAR(f.at(c, y, x), centre, 1e-4 * std::max(1.0f, centre))
              << "level " << i << " channel " << c;
        }
      }
    }
  }
}

// Closed interval of input-resolution coordinates tracked through the
// topology; conv grows it by the kernel radius, pooling maps input index k to
// outputs o with |2o - k| <= 1.
struct Interval {
  long lo, hi;
};

Interval conv_support(Interval s, long radius) { return {s.lo - radius, s.hi + radius}; }

Interval pool_support(Interval s) {
  auto ceil_half = [](long v) { return v >= 0 ? (v + 1) / 2 : -((-v) / 2); };
  auto floor_half = [](long v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); };
  return {ceil_half(s.lo - 1), floor_half(s.hi + 1)};
}

TEST(Backbone, ImpulseSupportStaysInsideReceptiveField) {
  const std::size_t n = 96, p = 48;
  Tensor base({3, n, n}, 0.5f);
  Tensor impulse = base;
  for (std::size_t c = 0; c < 3; ++c) impulse.at(c, p, p) = 1.0f;
  const auto a = backbone().extract(base);
  const auto b = backbone().extract(impulse);

  Interval support{long(p), long(p)};
  for (std::size_t s = 1; s <= kNumStages; ++s) {
    if (s > 1) support = pool_support(support);
    for (std::size_t l = 0; l < backbone().config().stages[s - 1].num_convs; ++l) {
      support = conv_support(support, 1);
    }
    const Tensor& fa = a.stages[s];
    const Tensor& fb = b.stages[s];
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    for (std::size_t c = 0; c < fa.channels(); ++c) {
      for (std::size_t y = 0; y < fa.height(); ++y) {
        for (std::size_t x = 0; x < fa.width(); ++x) {
          if (fa.at(c, y, x) != fb.at(c, y, x)) {
            lo = std::min({lo, long(y), long(x)});
            hi = std::max({hi, long(y), long(x)});
          }
        }
      }
    }
    ASSERT_LE(lo, hi) << "impulse left no trace at stage " << s;
    EXPECT_GE(lo, support.lo) << "stage " << s;
    EXPECT_LE(hi, support.hi) << "stage " << s;
    if (s == 1) {
      EXPECT_GE(hi - lo, 2);
    }
  }
}

TEST(Backbone, ShiftByTwoTranslatesStageOne) {
  const std::size_t n = 48;
  const Tensor big = synthetic::natural_like_image(5, n + 2, n + 2);
  Tensor a({3, n, n}), b({3, n, n});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        a.at(c, y, x) = big.at(c, y + 2, x + 2);
        b.at(c, y, x) = big.at(c, y, x);
      }
    }
  }
  const auto fa = backbone().extract(a, 1).stages[1];
  const auto fb = backbone().extract(b, 1).stages[1];
  const std::size_t margin = 2;
  for (std::size_t c = 0; c < fa.channels(); ++c) {
    for (std::size_t y = margin; y + 2 + margin < n; ++y) {
      for (std::size_t x = margin; x + 2 + margin < n; ++x) {
        ASSERT_NEAR(fa.at(c, y, x), fb.at(c, y + 2, x + 2), 1e-4);
      }
    }
  }
}

TEST(Backbone, ExtractionIsBitwiseDeterministic) {
  const Tensor img = synthetic::natural_like_image(6, 40, 52);
  const auto a = backbone().extract(img);
  const auto b = backbone().extract(img);
  for (std::size_t i = 0; i < a.levels(); ++i) EXPECT_EQ(a.stages[i], b.stages[i]);
}

TEST(Backbone, DoublePathAgreesWithFloat) {
  const Tensor img = synthetic::natural_like_image(7, 36, 36);
  const auto f = backbone().extract(img);
  const auto d = backbone().extract(img.cast<double>());
  for (std::size_t i = 0; i < f.levels(); ++i) {
    double scale = 0.0;
    for (double v : d.stages[i].values()) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < f.stages[i].size(); ++k) {
      ASSERT_NEAR(f.stages[i][k], d.stages[i][k], 1e-4 * std::max(1.0, scale));
    }
  }
}

TEST(Backbone, RejectsSmallAndNonFiniteImages) {
  EXPECT_THROW(backbone().extract(Tensor({3, 31, 64}, 0.5f)), ShapeError);
  EXPECT_THROW(backbone().extract(Tensor({1, 64, 64}, 0.5f)), ShapeError);
  Tensor nan({3, 32, 32}, 0.5f);
  nan[17] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(backbone().extract(nan), NumericError);
  EXPECT_NO_THROW(backbone().extract(Tensor({3, 32, 32}, 0.5f)));
}

TEST(Backbone, RenormalizedStagesHaveComparableMagnitudes) {
  std::vector<double> means(kNumPyramidLevels, 0.0);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto pyr = backbone().extract(synthetic::natural_like_image(50 + seed, 64, 64));
    for (std::size_t i = 1; i < pyr.levels(); ++i) {
      double sum = 0.0;
      for (float v : pyr.stages[i].values()) sum += v;
      means[i] += sum / pyr.stages[i].size() / 4.0;
    }
  }
  const auto [lo, hi] = std::minmax_element(means.begin() + 1, means.end());
  ASSERT_GT(*lo, 0.0);
  RecordProperty("stage_mean_ratio", std::to_string(*hi / *lo));
  // Smoke statistic: the spread is reported; only a gross blow-up fails.
  EXPECT_LT(*hi / *lo, 1e3);
}

}  // namespace
}  // namespace adists
