#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>

#include "adists/eval.hpp"
#include "adists/image_io.hpp"
#include "adists/synthetic.hpp"
#include "support.hpp"

namespace adists {
namespace {

const Scorer& scorer() {
  static const Scorer instance(synthetic::make_archive(0), default_logistic_params());
  return instance;
}

void write(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

TEST(CsvLine, QuotedFieldsAndEscapes) {
  EXPECT_EQ(split_csv_line("a,b,,c"), (std::vector<std::string>{"a", "b", "", "c"}));
  EXPECT_EQ(split_csv_line("\"x,y\",\"say \"\"hi\"\"\",z"),
            (std::vector<std::string>{"x,y", "say \"hi\"", "z"}));
}

TEST(Manifest, MosParsingResolvesPathsAndTags) {
  test::TempDir dir("manifest");
  write(dir / "m.csv", "\xEF\xBB\xBFref,dist,score,subset\nr.png,d1.png,3.5,blur\n/abs/r.png,d2.png,-1,\n");
  const auto recs = load_mos_manifest(dir / "m.csv");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].ref, dir / "r.png");
  EXPECT_EQ(recs[0].score, 3.5);
  EXPECT_EQ(recs[0].subset, "blur");
  EXPECT_EQ(recs[1].ref, std::filesystem::path("/abs/r.png"));
  EXPECT_EQ(recs[1].subset, "");
}

TEST(Manifest, MalformedMosFilesAreRejected) {
  test::TempDir dir("manifest");
  write(dir / "noheader.csv", "r.png,d.png,1\nr.png,d.png,2\n");
  EXPECT_THROW(load_mos_manifest(dir / "noheader.csv"), DataError);
  write(dir / "score.csv", "ref,dist,score\nr.png,d.png,abc\nr.png,d.png,2\n");
  EXPECT_THROW(load_mos_manifest(dir / "score.csv"), DataError);
  write(dir / "one.csv", "ref,dist,score\nr.png,d.png,1\n");
  EXPECT_THROW(load_mos_manifest(dir / "one.csv"), DataError);
  EXPECT_THROW(load_mos_manifest(dir / "missing.csv"), DataError);
}

TEST(Manifest, TwoAfcRatiosMustBeProbabilities) {
  test::TempDir dir("manifest");
  write(dir / "ok.csv", "ref,dist0,dist1,r\nr.png,a.png,b.png,0.25\nr.png,a.png,b.png,1\n");
  const auto recs = load_2afc_manifest(dir / "ok.csv");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].r, 0.25);
  write(dir / "bad.csv", "ref,dist0,dist1,r\nr.png,a.png,b.png,1.25\n");
  EXPECT_THROW(load_2afc_manifest(dir / "bad.csv"), DataError);
}

TEST(RunEval, IdenticalPairsAreReportedAsDegenerate) {
  test::TempDir dir("eval");
  std::string manifest = "ref,dist,score\n";
  for (int i = 0; i < 6; ++i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    encode_image(synthetic::natural_like_image(i, 40, 40), dir / name);
    manifest += name + "," + name + "," + std::to_string(i) + "\n";
  }
  write(dir / "m.csv", manifest);
  EvalOptions options;
  options.cache = dir / "cache.csv";
  const EvalReport r = run_eval(dir / "m.csv", scorer(), options);
  EXPECT_EQ(r.scored, 6u);
  EXPECT_TRUE(r.overall.degenerate);
  EXPECT_FALSE(r.overall.message.empty());
  std::ifstream cache(dir / "cache.csv");
  std::string header, line;
  std::getline(cache, header);
  EXPECT_EQ(header, "index,ref,dist,score,metric,subset,status");
  std::size_t rows = 0;
  while (std::getline(cache, line)) {
    const auto fields = split_csv_line(line);
    ASSERT_EQ(fields.size(), 7u);
    EXPECT_NEAR(std::stod(fields[4]), 0.0, 1e-6);
    ++rows;
  }
  EXPECT_EQ(rows, 6u);
}

TEST(RunEval, NoiseGradedManifestRanksCorrectlyWithSubsetAccounting) {
  test::TempDir dir("eval");
  const auto nm = synthetic::write_noise_manifest(dir.path(), 3, 3, 64, {0.02, 0.05, 0.1, 0.2});
  EvalOptions options;
  const EvalReport r = run_eval(nm.manifest, scorer(), options);
  EXPECT_EQ(r.records, 12u);
  EXPECT_EQ(r.scored, 12u);
  EXPECT_GE(r.overall.srcc, 0.95);
  EXPECT_EQ(r.orientation, "negated distance used as quality");
  ASSERT_EQ(r.subsets.size(), 3u);
  std::size_t total = 0;
  for (const auto& row : r.subsets) {
    total += row.n;
    EXPECT_EQ(row.srcc, 1.0) << row.subset;
  }
  EXPECT_EQ(total, r.overall.n);

  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["metric"], "adists");
  EXPECT_EQ(j["records"], 12);
  EXPECT_TRUE(j.contains("fit_form"));
  EXPECT_EQ(j["subsets"].size(), 3u);
}

TEST(RunEval, UnreadableImagesAreCountedAsFailures) {
  test::TempDir dir("eval");
  const auto nm = synthetic::write_noise_manifest(dir.path(), 4, 2, 40, {0.05, 0.1, 0.2});
  std::ofstream(nm.manifest, std::ios::app) << "ref_0.png,missing.png,-9,image_0\n";
  EvalOptions options;
  options.metric = MetricId::Mse;
  options.cache = dir / "cache.csv";
  const EvalReport r = run_eval(nm.manifest, scorer(), options);
  EXPECT_EQ(r.records, 7u);
  EXPECT_EQ(r.scored, 6u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].index, 6u);
  EXPECT_EQ(r.overall.n, 6u);
  std::ifstream cache(dir / "cache.csv");
  std::string last, line;
  while (std::getline(cache, line)) last = line;
  EXPECT_NE(last.find("error:"), std::string::npos);
}

TEST(RunEval, TwoAfcAgreesWithUnanimousVotes) {
  test::TempDir dir("eval");
  std::string manifest = "ref,dist0,dist1,r,subset\n";
  for (int i = 0; i < 4; ++i) {
    const Tensor ref = synthetic::natural_like_image(20 + i, 48, 48);
    const std::string r = "r" + std::to_string(i) + ".png";
    const std::string a = "a" + std::to_string(i) + ".png";
    const std::string b = "b" + std::to_string(i) + ".png";
    encode_image(ref, dir / r);
    encode_image(synthetic::add_gaussian_noise(ref, 0.02, i), dir / a);
    encode_image(synthetic::add_gaussian_noise(ref, 0.2, i), dir / b);
    // Humans unanimously prefer the lightly distorted image; list it first or
    // second alternately.
    manifest += i % 2 ? r + "," + b + "," + a + ",0,odd\n" : r + "," + a + "," + b + ",1,even\n";
  }
  write(dir / "m.csv", manifest);
  for (MetricId metric : {MetricId::Adists, MetricId::Ssim, MetricId::Mse}) {
    EvalOptions options;
    options.mode = EvalMode::TwoAfc;
    options.metric = metric;
    const EvalReport r = run_eval(dir / "m.csv", scorer(), options);
    EXPECT_DOUBLE_EQ(r.overall.two_afc, 1.0) << metric_name(metric);
    EXPECT_EQ(r.subsets.size(), 2u);
  }
}

TEST(RunEval, ResizeOptionRescalesInputs) {
  test::TempDir dir("eval");
  const auto nm = synthetic::write_noise_manifest(dir.path(), 5, 2, 96, {0.05, 0.2});
  EvalOptions options;
  options.resize_short_side = 48;
  options.metric = MetricId::Ssim;
  const EvalReport r = run_eval(nm.manifest, scorer(), options);
  EXPECT_EQ(r.scored, 4u);
  EXPECT_EQ(r.orientation, "metric value used as quality");
}

TEST(Modes, ParseNames) {
  EXPECT_EQ(parse_eval_mode("mos"), EvalMode::Mos);
  EXPECT_EQ(parse_eval_mode("2afc"), EvalMode::TwoAfc);
  EXPECT_THROW(parse_eval_mode("pairs"), UsageError);
}

}  // namespace
}  // namespace adists
