#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "adists/metrics.hpp"
#include "adists/synthetic.hpp"
#include "adists/texture_model.hpp"
#include "support.hpp"

namespace adists {
namespace {

using test::backbone;
using test::params;
using test::random_tensor;

TEST(Dispersion, ConstantFeaturesGiveZero) {
  const TensorD f({4, 30, 30}, 2.5);
  const TensorD g = stage_dispersion(f, WindowSpec{}, 1e-6);
  ASSERT_EQ(g.shape(), (Shape{1, 10, 10}));
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Dispersion, PoissonFieldIsNearOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::poisson_distribution<int> poisson(5.0);
    TensorD f({1, 80, 80});
    for (auto& v : f.values()) v = poisson(rng);
    const TensorD g = stage_dispersion(f, WindowSpec{}, 1e-6);
    double mean = 0.0;
    for (double v : g.values()) mean += v;
    mean /= g.size();
    EXPECT_NEAR(mean, 1.0, 0.15) << "seed " << seed;
  }
}

TEST(Dispersion, StepEdgeMatchesTwoLevelClosedForm) {
  const std::size_t n = 40, edge = 20;
  TensorD f({1, n, n}, 0.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = edge; x < n; ++x) f.at(0, y, x) = 10.0;
  }
  const double c = 1e-6;
  const TensorD g = stage_dispersion(f, WindowSpec{}, c);
  for (std::size_t x = 0; x < g.width(); ++x) {
    // Fraction of the window lying on the bright side.
    const double high = std::clamp<double>(double(x + 21) - double(edge), 0.0, 21.0) / 21.0;
    const double mean = 10.0 * high, var = 100.0 * high * (1.0 - high);
    for (std::size_t y = 0; y < g.height(); ++y) EXPECT_NEAR(g.at(0, y, x), var / (mean + c), 1e-6);
  }
  // The window split closest to half and half sits near 25 / 5.
  EXPECT_NEAR(g.at(0, 0, 10), 5.0, 0.25);
}

TEST(Dispersion, NonNegativeOnBackboneFeatures) {
  const auto pyr = backbone().extract(synthetic::natural_like_image(3, 64, 64));
  const auto gamma = dispersion_index(pyr, WindowSpec{}, 1e-6);
  ASSERT_EQ(gamma.stages.size(), kNumPyramidLevels);
  for (const auto& g : gamma.stages) {
    for (float v : g.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_TRUE(std::isfinite(v));
    }
  }
}

TEST(Dispersion, LevelZeroUsesLuminance) {
  const Tensor img = synthetic::natural_like_image(4, 40, 40);
  const auto pyr = backbone().extract(img);
  const auto gamma = dispersion_index(pyr, WindowSpec{}, 1e-6);
  const Tensor luma = luminance(img);
  const Tensor direct = stage_dispersion(luma, WindowSpec{}, 1e-6);
  ASSERT_EQ(gamma.stages[0].shape(), direct.shape());
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(gamma.stages[0][i], direct[i], 1e-7);
  EXPECT_NEAR(luma[0], 0.299 * img[0] + 0.587 * img[1600] + 0.114 * img[3200], 1e-6);
}

TEST(Dispersion, RejectsNonPositiveStabilizer) {
  EXPECT_THROW(stage_dispersion(TensorD({1, 5, 5}, 1.0), WindowSpec{3, 3}, 0.0), UsageError);
}

TEST(Logistic, MidpointAndAsymptote) {
  const StageLogistic m{-1.0, 0.0};
  EXPECT_DOUBLE_EQ(m.probability(0.0), 0.5);
  EXPECT_LT(m.probability(1e6), 1e-12);
  const StageLogistic shifted{-2.0, 3.0};
  EXPECT_DOUBLE_EQ(shifted.probability(1.5), 0.5);
  EXPECT_GT(StageLogistic({-1.0, 0.0}).probability(-1e6), 1.0 - 1e-12);
}

DispersionMap<double> random_dispersion(std::uint64_t seed, std::size_t levels) {
  DispersionMap<double> d;
  for (std::size_t i = 0; i < levels; ++i) {
    d.stages.push_back(random_tensor<double>({1, 7 + i, 9}, seed * 13 + i, 0.0, 4.0));
  }
  return d;
}

LogisticParams plain_params(std::size_t levels) {
  LogisticParams p;
  for (std::size_t i = 0; i < levels; ++i) p.stages.push_back({-1.5 - double(i), 2.0});
  return p;
}

TEST(TextureProbability, BoundedAndComplementary) {
  const auto maps = texture_probability(random_dispersion(1, 6), plain_params(6));
  for (std::size_t i = 0; i < maps.p.size(); ++i) {
    const TensorD q = maps.structure(i);
    for (std::size_t k = 0; k < maps.p[i].size(); ++k) {
      ASSERT_GE(maps.p[i][k], 0.0);
      ASSERT_LE(maps.p[i][k], 1.0);
      ASSERT_EQ(maps.p[i][k] + q[k], 1.0);
    }
  }
}

TEST(TextureProbability, StrictlyDecreasingInGammaForNegativeWeight) {
  auto gamma = random_dispersion(2, 6);
  const auto before = texture_probability(gamma, plain_params(6));
  for (auto& g : gamma.stages) {
    for (auto& v : g.values()) v += 0.05;
  }
  const auto after = texture_probability(gamma, plain_params(6));
  for (std::size_t i = 0; i < before.p.size(); ++i) {
    for (std::size_t k = 0; k < before.p[i].size(); ++k) ASSERT_LT(after.p[i][k], before.p[i][k]);
  }
}

TEST(TextureProbability, MissingStageParamsAreRejected) {
  EXPECT_THROW(texture_probability(random_dispersion(3, 6), plain_params(4)), UsageError);
}

TEST(CombineMin, Examples) {
  TextureProbabilityMaps<double> a, b;
  a.p.push_back(TensorD({1, 1, 2}, std::vector<double>{0.3, 0.9}));
  b.p.push_back(TensorD({1, 1, 2}, std::vector<double>{0.7, 0.2}));
  const auto m = combine_min(a, b);
  EXPECT_EQ(m.p[0][0], 0.3);
  EXPECT_EQ(m.p[0][1], 0.2);
  EXPECT_EQ(combine_min(a, a).p[0], a.p[0]);
}

TEST(CombineMin, CommutativeAndNeverAboveEitherInput) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = texture_probability(random_dispersion(10 + seed, 6), plain_params(6));
    const auto b = texture_probability(random_dispersion(40 + seed, 6), plain_params(6));
    const auto ab = combine_min(a, b), ba = combine_min(b, a);
    for (std::size_t i = 0; i < ab.p.size(); ++i) {
      EXPECT_EQ(ab.p[i], ba.p[i]);
      for (std::size_t k = 0; k < ab.p[i].size(); ++k) {
        ASSERT_LE(ab.p[i][k], a.p[i][k]);
        ASSERT_LE(ab.p[i][k], b.p[i][k]);
      }
    }
  }
}

TEST(CombineMin, ShapeMismatchIsRejected) {
  TextureProbabilityMaps<double> a, b;
  a.p.push_back(TensorD({1, 2, 2}, 0.5));
  b.p.push_back(TensorD({1, 2, 3}, 0.5));
  EXPECT_THROW(combine_min(a, b), ShapeError);
}

struct Samples {
  std::vector<double> gamma;
  std::vector<int> label;
};

Samples separable(std::uint64_t seed, std::size_t per_class) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> tex(0.0, 1.0), str(2.0, 5.0);
  Samples s;
  for (std::size_t i = 0; i < per_class; ++i) {
    s.gamma.push_back(tex(rng));
    s.label.push_back(1);
    s.gamma.push_back(str(rng));
    s.label.push_back(0);
  }
  return s;
}

TEST(FitLogistic, SeparableCorpusIsClassifiedWithNegativeWeight) {
  const Samples s = separable(1, 200);
  const LogisticFit fit = fit_logistic_1d(s.gamma, s.label);
  EXPECT_GE(fit.accuracy, 0.99);
  EXPECT_LT(fit.params.weight, 0.0);
  EXPECT_TRUE(std::isfinite(fit.params.weight));
  EXPECT_TRUE(std::isfinite(fit.params.bias));
  EXPECT_TRUE(fit.converged);
}

TEST(FitLogistic, ShuffledLabelsGiveChanceAccuracy) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Samples s = separable(10 + seed, 500);
    std::mt19937_64 rng(100 + seed);
    std::shuffle(s.label.begin(), s.label.end(), rng);
    const LogisticFit fit = fit_logistic_1d(s.gamma, s.label);
    EXPECT_NEAR(fit.accuracy, 0.5, 0.05) << "seed " << seed;
  }
}

TEST(FitLogistic, DuplicatingRecordsLeavesTheFitUnchanged) {
  Samples s = separable(2, 60);
  std::mt19937_64 rng(3);
  std::shuffle(s.label.begin(), s.label.begin() + 30, rng);  // overlap, finite optimum
  const LogisticFit once = fit_logistic_1d(s.gamma, s.label);
  Samples twice = s;
  twice.gamma.insert(twice.gamma.end(), s.gamma.begin(), s.gamma.end());
  twice.label.insert(twice.label.end(), s.label.begin(), s.label.end());
  const LogisticFit dup = fit_logistic_1d(twice.gamma, twice.label);
  EXPECT_NEAR(once.params.weight, dup.params.weight, 1e-6);
  EXPECT_NEAR(once.params.bias, dup.params.bias, 1e-6);
}

TEST(FitLogistic, LossIsNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Samples s = separable(20 + seed, 100);
    std::mt19937_64 rng(seed);
    std::shuffle(s.label.begin(), s.label.begin() + 40, rng);
    const LogisticFit fit = fit_logistic_1d(s.gamma, s.label);
    ASSERT_GE(fit.loss_trace.size(), 2u);
    for (std::size_t i = 1; i < fit.loss_trace.size(); ++i) {
      ASSERT_LE(fit.loss_trace[i], fit.loss_trace[i - 1]);
    }
  }
}

TEST(FitLogistic, DegenerateInputsAreRejected) {
  EXPECT_THROW(fit_logistic_1d({0.1, 0.2, 0.3}, {1, 1, 1}), DataError);
  EXPECT_THROW(fit_logistic_1d({0.1, 0.2}, {1, 0, 1}), DataError);
  EXPECT_THROW(fit_logistic_1d({0.1, 0.2}, {1, 2}), DataError);
}

TEST(FitClassifier, RejectsSingleClassAndThinCorpora) {
  PatchCorpus corpus = synthetic::patch_corpus(5, 3, {16, 32});
  EXPECT_THROW(fit_classifier(corpus, backbone(), WindowSpec{}), DataError);
  std::erase_if(corpus.records, [](const PatchRecord& r) { return r.label == PatchLabel::Texture; });
  EXPECT_THROW(fit_classifier(corpus, backbone(), WindowSpec{}), DataError);
}

TEST(FitClassifier, SmallPatchLevelsSeparateOnHeldOutData) {
  const std::vector<std::size_t> sizes{32, 64};
  const PatchCorpus train = synthetic::patch_corpus(11, 40, sizes);
  const PatchCorpus held = synthetic::patch_corpus(12, 40, sizes);
  const FitOptions options;
  for (std::size_t level : {2u, 3u}) {
    const LevelSamples a = level_samples(train, backbone(), level, 1e-6, options);
    const LevelSamples b = level_samples(held, backbone(), level, 1e-6, options);
    ASSERT_EQ(a.gamma.size(), 80u);
    const LogisticFit fit = fit_logistic_1d(a.gamma, a.label, options);
    const double held_out = logistic_accuracy(fit.params, b.gamma, b.label);
    EXPECT_GE(held_out, 0.85) << "level " << level;
    EXPECT_NEAR(held_out, fit.accuracy, 0.02) << "level " << level;
  }
}

TEST(Params, FormatParseRoundTripIsLossless) {
  LogisticParams p = params();
  p.stages[3].weight = -1.0 / 3.0;
  p.window = WindowSpec{15, 17};
  p.c = 2.5e-7;
  const LogisticParams back = parse_params(format_params(p));
  EXPECT_EQ(back, p);
  test::TempDir dir("params");
  save_params(p, dir / "p.txt");
  EXPECT_EQ(load_params(dir / "p.txt"), p);
}

TEST(Params, MalformedFilesAreRejected) {
  EXPECT_THROW(parse_params("stage_0.w = 1\n"), DataError);
  EXPECT_THROW(parse_params("stage_0.w = abc\nstage_0.b = 1\n"), DataError);
  EXPECT_THROW(parse_params("window = 21\nstage_0.w = 1\nstage_0.b = 1\n"), DataError);
  EXPECT_THROW(parse_params("nonsense\n"), DataError);
  EXPECT_THROW(load_params("/nonexistent/params.txt"), DataError);
}

TEST(Params, DefaultsAreFiniteAndLabelled) {
  const LogisticParams& p = params();
  ASSERT_EQ(p.stages.size(), kNumPyramidLevels);
  for (const auto& s : p.stages) {
    EXPECT_TRUE(std::isfinite(s.weight));
    EXPECT_TRUE(std::isfinite(s.bias));
  }
  EXPECT_EQ(p.source, "synthetic-corpus-default");
  EXPECT_EQ(p.window, WindowSpec{});
}

TEST(Params, MismatchedConfigurationIsRefused) {
  MetricConfig config;
  EXPECT_NO_THROW(require_compatible(params(), config));
  config.window = WindowSpec{11, 11};
  EXPECT_THROW(require_compatible(params(), config), UsageError);
  config = MetricConfig{};
  config.c = 1e-3;
  EXPECT_THROW(require_compatible(params(), config), UsageError);
}

TEST(Corpus, ManifestRoundTrip) {
  test::TempDir dir("corpus");
  const PatchCorpus corpus = synthetic::patch_corpus(6, 2, {16, 32});
  save_corpus(corpus, dir.path());
  const PatchCorpus back = load_corpus_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.records.size(), corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    EXPECT_EQ(back.records[i].label, corpus.records[i].label);
    EXPECT_EQ(back.records[i].size, corpus.records[i].size);
    for (std::size_t k = 0; k < corpus.records[i].image.size(); ++k) {
      ASSERT_LE(std::abs(back.records[i].image[k] - corpus.records[i].image[k]), 1.0 / 255.0);
    }
  }
  std::ofstream(dir / "bad.csv") << "path,label,size\nx.png,blob,16\n";
  EXPECT_THROW(load_corpus_manifest(dir / "bad.csv"), DataError);
}

TEST(Maps, SizesShrinkWithLevel) {
  const auto maps = emit_probability_maps(synthetic::natural_like_image(7, 96, 96), backbone(), params());
  ASSERT_EQ(maps.size(), kNumPyramidLevels);
  for (std::size_t i = 1; i < maps.size(); ++i) {
    EXPECT_LE(maps[i].height, maps[i - 1].height);
    EXPECT_LE(maps[i].width, maps[i - 1].width);
    EXPECT_EQ(maps[i].pixels.size(), maps[i].height * maps[i].width);
  }
}

TEST(Maps, ConstantGrayIsNearUniform) {
  const auto maps = emit_probability_maps(Tensor({3, 128, 128}, 0.5f), backbone(), params());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto [lo, hi] = std::minmax_element(maps[i].pixels.begin(), maps[i].pixels.end());
    EXPECT_LE(*hi - *lo, 8) << "level " << i;
  }
}

TEST(Maps, HalfNoiseCompositeSeparatesTheHalves) {
  const Tensor img = synthetic::half_noise_composite(0, 128, 128);
  const auto pyr = backbone().extract(img);
  const auto maps = texture_probability(dispersion_index(pyr, params().window, params().c), params());
  // Level 1 has the finest feature map that still pools a 21x21 window of
  // stage features.
  const TensorD p = maps.p[1].cast<double>();
  double left = 0.0, right = 0.0;
  std::size_t nl = 0, nr = 0;
  for (std::size_t y = 0; y < p.height(); ++y) {
    for (std::size_t x = 0; x < p.width(); ++x) {
      if (2 * x + 1 < p.width()) {
        left += p.at(0, y, x), ++nl;
      } else if (2 * x > p.width()) {
        right += p.at(0, y, x), ++nr;
      }
    }
  }
  left /= nl;
  right /= nr;
  EXPECT_GT(std::abs(left - right), 0.3);
  // A flat region has zero dispersion, which a negative stage weight maps to
  // the largest probability the classifier can produce.
  ASSERT_LT(params().stages[1].weight, 0.0);
  EXPECT_GT(right, left);
}

}  // namespace
}  // namespace adists
