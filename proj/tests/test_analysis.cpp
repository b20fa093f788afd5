#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hbmp/analysis.hpp"
#include "hbmp/synth.hpp"

using namespace hbmp;

namespace {

const std::vector<std::string> kLabels{"entailment", "contradiction", "neutral"};

// Reference HBMP confusion counts on the SNLI test set (rows gold).
ConfusionMatrix reference_confusion() {
  return ConfusionMatrix::from_counts(kLabels, {{3047, 58, 263}, {117, 2840, 280}, {357, 240, 2622}});
}

std::vector<std::uint8_t> fixed_accuracy_vector(std::size_t n, double accuracy) {
  std::vector<std::uint8_t> v(n, 0);
  const auto hits = static_cast<std::size_t>(std::llround(accuracy * static_cast<double>(n)));
  for (std::size_t i = 0; i < hits; ++i) v[i] = 1;
  return v;
}

}  // namespace

TEST(Confusion, ReferenceEntailRowRecall) {
  const auto cm = reference_confusion();
  EXPECT_EQ(cm.row_sum(0), 3368u);
  EXPECT_DOUBLE_EQ(cm.recall(0), 3047.0 / 3368.0);
  EXPECT_DOUBLE_EQ(round1(100.0 * cm.recall(0)), 90.5);
  EXPECT_DOUBLE_EQ(round1(100.0 * cm.precision(0)), 86.5);  // 3047 / 3521
}

TEST(Confusion, ReferenceRecallsAndPrecisions) {
  const auto cm = reference_confusion();
  EXPECT_DOUBLE_EQ(round1(100.0 * cm.recall(1)), 87.7);     // 2840 / 3237
  EXPECT_DOUBLE_EQ(round1(100.0 * cm.recall(2)), 81.5);     // 2622 / 3219
  EXPECT_DOUBLE_EQ(round1(100.0 * cm.precision(1)), 90.5);  // 2840 / 3138
  EXPECT_DOUBLE_EQ(round1(100.0 * cm.precision(2)), 82.8);  // 2622 / 3165
  EXPECT_DOUBLE_EQ(cm.accuracy(), 8509.0 / 9824.0);
}

TEST(F1, ReferenceEntailmentScore) {
  EXPECT_DOUBLE_EQ(round1(100.0 * f1_score(0.865, 0.905)), 88.5);
  EXPECT_DOUBLE_EQ(f1_score(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(f1_score(0.5, 0.5), 0.5);
}

TEST(Confusion, PerfectPredictions) {
  const auto r = report_from_predictions({0, 1, 2, 2}, {0, 1, 2, 2}, kLabels);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  for (const auto& s : r.per_label) EXPECT_DOUBLE_EQ(s.f1, 1.0);
  EXPECT_EQ(r.per_label[2].support, 2u);
}

TEST(Confusion, NeverPredictedLabelHasZeroPrecision) {
  const auto r = report_from_predictions({0, 1}, {0, 0}, kLabels);
  EXPECT_DOUBLE_EQ(r.per_label[1].precision, 0.0);
  EXPECT_DOUBLE_EQ(r.per_label[0].precision, 0.5);
  EXPECT_THROW(report_from_predictions({0}, {0, 1}, kLabels), DimensionError);
  ConfusionMatrix cm(kLabels);
  EXPECT_THROW(cm.add(3, 0), std::out_of_range);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(sorted_quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(sorted_quantile({0, 10}, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(sorted_quantile({7}, 0.9), 7.0);
}

TEST(Bootstrap, AllCorrectGivesDegenerateInterval) {
  const auto ci = bootstrap_ci(std::vector<std::uint8_t>(50, 1), 100, 100, 0.95, 3);
  EXPECT_DOUBLE_EQ(ci.lower, 1.0);
  EXPECT_DOUBLE_EQ(ci.upper, 1.0);
}

TEST(Bootstrap, SeededAndReproducible) {
  const auto v = fixed_accuracy_vector(500, 0.7);
  const auto a = bootstrap_ci(v, 200, 300, 0.95, 9), b = bootstrap_ci(v, 200, 300, 0.95, 9);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_LT(a.lower, 0.7);
  EXPECT_GT(a.upper, 0.7);
}

TEST(Bootstrap, WidthMatchesBinomialApproximation) {
  // Normal approximation: width ≈ 2 · 1.96 · sqrt(p(1−p)/m).
  const double p = 0.866, m = 1000.0;
  const double expected = 2.0 * 1.959964 * std::sqrt(p * (1.0 - p) / m);
  const auto ci = bootstrap_ci(fixed_accuracy_vector(10000, p), 1000, 1000, 0.95, 1);
  EXPECT_NEAR(ci.upper - ci.lower, expected, 0.006);
  EXPECT_NEAR((ci.upper + ci.lower) / 2.0, p, 0.004);
}

TEST(Bootstrap, CoverageOverSeeds) {
  int covered = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto ci = bootstrap_ci(fixed_accuracy_vector(2000, 0.8), 300, 400, 0.95, s);
    covered += ci.lower <= 0.8 && 0.8 <= ci.upper;
  }
  EXPECT_GE(covered, 36);
}

TEST(Bootstrap, RejectsBadArguments) {
  EXPECT_THROW(bootstrap_ci({1, 0}, 10, 0), std::invalid_argument);
  EXPECT_THROW(bootstrap_ci({}, 10, 10), std::invalid_argument);
  EXPECT_THROW(bootstrap_ci({1}, 0, 10), std::invalid_argument);
  EXPECT_THROW(bootstrap_ci({1}, 10, 10, 1.0), std::invalid_argument);
}

TEST(Categories, CellsMatchDirectCounts) {
  const std::vector<std::vector<std::string>> tags{{"neg"}, {"neg", "quant"}, {"quant"}, {}, {"neg", "neg"}};
  const std::vector<int> gold{1, 1, 0, 2, 0};
  const std::vector<int> pred{1, 0, 0, 2, 1};
  const auto t = category_breakdown(tags, gold, pred, kLabels);
  EXPECT_EQ(t.tags, (std::vector<std::string>{"neg", "quant"}));
  EXPECT_EQ(t.tag_examples.at("neg"), 3u);
  for (const auto& tag : t.tags)
    for (std::size_t k = 0; k < 3; ++k) {
      std::size_t total = 0, correct = 0;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool has = std::find(tags[i].begin(), tags[i].end(), tag) != tags[i].end();
        if (has && gold[i] == static_cast<int>(k)) ++total, correct += gold[i] == pred[i];
      }
      EXPECT_EQ(t.cell(tag, k).total, total) << tag << k;
      EXPECT_EQ(t.cell(tag, k).correct, correct) << tag << k;
    }
  EXPECT_FALSE(t.cell("neg", 2).accuracy().has_value());
  EXPECT_DOUBLE_EQ(*t.cell("neg", 1).accuracy(), 0.5);
}

TEST(Categories, MicroAndMacroTotals) {
  const std::vector<std::vector<std::string>> tags{{"a"}, {"a"}, {"a"}, {"b"}};
  const auto t = category_breakdown(tags, {0, 0, 0, 0}, {0, 0, 1, 1}, kLabels);
  EXPECT_DOUBLE_EQ(*t.micro_total(0), 0.5);              // 2 of 4
  EXPECT_DOUBLE_EQ(*t.macro_total(0), (2.0 / 3.0) / 2);  // mean of 2/3 and 0
  EXPECT_FALSE(t.micro_total(1).has_value());
  EXPECT_THROW(category_breakdown(tags, {0}, {0}, kLabels), DimensionError);
}

TEST(Report, JsonAndTextContainTheNumbers) {
  auto r = report_from_confusion(reference_confusion());
  r.interval = bootstrap_ci(fixed_accuracy_vector(100, 0.9), 50, 50, 0.95, 0);
  r.categories = category_breakdown({{"x"}}, {0}, {0}, kLabels);
  const auto j = report_json(r);
  EXPECT_EQ(j["examples"], 9824);
  EXPECT_EQ(j["confusion"]["counts"][0][0], 3047);
  EXPECT_DOUBLE_EQ(j["labels"]["entailment"]["recall"].get<double>(), 3047.0 / 3368.0);
  EXPECT_TRUE(j["categories"]["tags"]["x"]["neutral"]["accuracy"].is_null());
  EXPECT_EQ(j["bootstrap"]["samples"], 50);
  const std::string text = format_report(r);
  EXPECT_NE(text.find("90.5%"), std::string::npos);
  EXPECT_NE(text.find("86.5%"), std::string::npos);
  EXPECT_NE(text.find("total (macro)"), std::string::npos);
}

TEST(Report, PredictionsTsv) {
  const auto path = (std::filesystem::temp_directory_path() / "hbmp_pred_test.tsv").string();
  write_predictions_tsv(path, {0, 2}, {1, 2}, kLabels);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(all, "index\tgold\tpredicted\n0\tentailment\tcontradiction\n1\tneutral\tneutral\n");
}

TEST(Evaluate, LabelSetMismatchIsAnError) {
  ModelConfig cfg;
  cfg.encoder = {EncoderVariant::hbmp, 10, 4, 3, 1};
  cfg.mlp_width = 4;
  cfg.classes = 2;
  Rng rng(1);
  const auto model = NliModel::init(cfg, rng);
  const auto ds = make_synthetic_corpus(6, 1);
  const auto vocab = Vocabulary::build({&ds});
  EXPECT_THROW(evaluate(model, ds, vocab), std::invalid_argument);
}
