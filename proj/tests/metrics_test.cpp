#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hprobe/error.hpp"
#include "hprobe/metrics.hpp"
#include "support.hpp"

namespace hprobe {
namespace {

TEST(RocAuc, PerfectAndInverted) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y = {0, 1, 0, 1}, inv = {1, 0, 1, 0};
  EXPECT_EQ(roc_auc(s, y), 1.0);
  EXPECT_EQ(roc_auc(s, inv), 0.0);
}

TEST(RocAuc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> s(12);
    std::vector<std::uint8_t> y(12);
    for (int i = 0; i < 12; ++i) {
      s[i] = static_cast<double>(rng() % 5) / 4.0;
      y[i] = i < 4 ? 1 : (rng() % 3 == 0);
    }
    EXPECT_NEAR(roc_auc(s, y), testing::pairwise_auc(s, y), 1e-12);
  }
}

TEST(RocAuc, SingleClassIsUndefined) {
  const std::vector<double> s = {0.1, 0.2};
  EXPECT_THROW(roc_auc(s, std::vector<std::uint8_t>{1, 1}), MetricError);
  EXPECT_THROW(recall_at_fpr(s, std::vector<std::uint8_t>{0, 0}), MetricError);
}

TEST(RecallAtFpr, PerfectSeparationIsOne) {
  const std::vector<double> s = {0.1, 0.2, 0.9, 0.95};
  const std::vector<std::uint8_t> y = {0, 0, 1, 1};
  for (double t : {0.0, 0.05, 0.1, 0.5}) EXPECT_EQ(recall_at_fpr(s, y, t), 1.0);
}

TEST(RecallAtFpr, ConstantScoresFollowDiagonal) {
  const std::vector<double> s(10, 0.3);
  const std::vector<std::uint8_t> y = {1, 0, 1, 0, 0, 1, 0, 0, 1, 0};
  EXPECT_NEAR(recall_at_fpr(s, y, 0.1), 0.1, 1e-15);
  EXPECT_NEAR(recall_at_fpr(s, y, 0.35), 0.35, 1e-15);
}

TEST(RecallAtFpr, CraftedTwentyPointsMatchEnumeration) {
  const std::vector<double> s = {0.95, 0.9, 0.9, 0.85, 0.8, 0.7, 0.7, 0.65, 0.6, 0.55,
                                 0.5,  0.45, 0.4, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05};
  const std::vector<std::uint8_t> y = {1, 0, 1, 1, 0, 1, 0, 0, 1, 0,
                                       0, 1, 0, 0, 0, 1, 0, 0, 0, 0};
  for (double t : {0.0, 0.05, 0.1, 0.2, 0.33, 0.5, 0.9}) {
    EXPECT_NEAR(recall_at_fpr(s, y, t), testing::enumerated_recall_at_fpr(s, y, t), 1e-12)
        << "target " << t;
  }
}

TEST(RocCurve, StartsAtOriginEndsAtOne) {
  const std::vector<double> s = {0.3, 0.1, 0.3, 0.9};
  const std::vector<std::uint8_t> y = {1, 0, 0, 1};
  const auto c = roc_curve(s, y);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.front().fpr, 0.0);
  EXPECT_EQ(c.front().tpr, 0.0);
  EXPECT_EQ(c.back().fpr, 1.0);
  EXPECT_EQ(c.back().tpr, 1.0);
  EXPECT_EQ(c[2].fpr, 0.5);
  EXPECT_EQ(c[2].tpr, 1.0);
}

TEST(Confusion, HandCountedSixTokens) {
  const std::vector<double> s = {0.9, 0.6, 0.4, 0.7, 0.2, 0.5};
  const std::vector<std::uint8_t> y = {1, 0, 1, 1, 0, 0};
  const Confusion c = confusion_at_threshold(s, y, 0.5);
  EXPECT_EQ(c.tp, 2);
  EXPECT_EQ(c.fp, 2);
  EXPECT_EQ(c.tn, 1);
  EXPECT_EQ(c.fn, 1);
  EXPECT_DOUBLE_EQ(c.accuracy, 0.5);
  ASSERT_TRUE(c.precision.has_value());
  EXPECT_DOUBLE_EQ(*c.precision, 0.5);
  EXPECT_DOUBLE_EQ(c.recall, 2.0 / 3.0);
}

TEST(Confusion, ExtremeThresholds) {
  const std::vector<double> s = {0.9, 0.6, 0.4};
  const std::vector<std::uint8_t> y = {1, 0, 1};
  const Confusion hi = confusion_at_threshold(s, y, 1.5);
  EXPECT_EQ(hi.recall, 0.0);
  EXPECT_EQ(hi.fp, 0);
  EXPECT_FALSE(hi.precision.has_value());
  const Confusion lo = confusion_at_threshold(s, y, -1.0);
  EXPECT_EQ(lo.recall, 1.0);
  EXPECT_EQ(lo.tn, 0);
  EXPECT_THROW(confusion_at_threshold(s, std::vector<std::uint8_t>{1}, 0.5), ShapeError);
}

TEST(Baselines, EntropyAndPerplexity) {
  const std::vector<double> uniform(4, 0.25), one_hot = {0.0, 1.0, 0.0};
  EXPECT_NEAR(entropy_score(uniform), std::log(4.0), 1e-15);
  EXPECT_EQ(entropy_score(one_hot), 0.0);
  const std::vector<double> nll = {0.5, 1.5};
  EXPECT_NEAR(perplexity_score(nll), std::exp(1.0), 1e-15);
  const auto windowed = perplexity_scores(nll, 2);
  EXPECT_NEAR(windowed[0], std::exp(0.5), 1e-15);
  EXPECT_NEAR(windowed[1], std::exp(1.0), 1e-15);
}

TEST(Report, CsvRowHasTableColumns) {
  const std::vector<double> s = {0.9, 0.1, 0.8, 0.3};
  const std::vector<std::uint8_t> y = {1, 0, 1, 0};
  const MetricsReport m = compute_metrics(s, y);
  EXPECT_EQ(m.auc, 1.0);
  EXPECT_EQ(metrics_csv_header(),
            "method,auc,r_at_fpr,accuracy,precision,recall,threshold,tp,fp,tn,fn\n");
  EXPECT_EQ(metrics_csv_row("mlp", m).rfind("mlp,1,1,1,1,1,0.5,2,0,2,0", 0), 0u);
}

}  // namespace
}  // namespace hprobe
