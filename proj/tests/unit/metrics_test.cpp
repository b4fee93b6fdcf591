#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dcdp/error.hpp"
#include "dcdp/metrics.hpp"

using namespace dcdp;

TEST(Metrics, HandComputedTwoClassMatrix) {
  const MetricsReport r = compute_metrics(ConfusionMatrix::from_counts({{5, 5}, {0, 10}}));
  EXPECT_NEAR(r.accuracy, 0.75, 1e-12);
  EXPECT_NEAR(r.per_class[0].precision, 1.0, 1e-12);
  EXPECT_NEAR(r.per_class[0].recall, 0.5, 1e-12);
  EXPECT_NEAR(r.per_class[0].f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[1].precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[1].recall, 1.0, 1e-12);
  EXPECT_NEAR(r.per_class[1].f1, 0.8, 1e-12);
  EXPECT_NEAR(r.f1_macro, 11.0 / 15.0, 1e-9);
  EXPECT_NEAR(r.f1_weighted, 11.0 / 15.0, 1e-9);
  EXPECT_EQ(r.per_class[0].tp, 5u);
  EXPECT_EQ(r.per_class[0].fn, 5u);
  EXPECT_EQ(r.per_class[1].fp, 5u);
}

TEST(Metrics, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 2, 1, 0, 0};
  const MetricsReport r = compute_metrics(ConfusionMatrix::from_predictions(y, y, 3));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.f1_macro, 1.0);
  EXPECT_NEAR(r.f1_weighted, 1.0, 1e-15);
  for (const auto& c : r.per_class) EXPECT_EQ(c.f1, 1.0);
}

TEST(Metrics, SingleClassDatasetFlagsAbsentClasses) {
  const std::vector<int> y{1, 1, 1};
  const MetricsReport r = compute_metrics(ConfusionMatrix::from_predictions(y, y, 3));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_TRUE(r.per_class[0].precision_undefined);
  EXPECT_TRUE(r.per_class[0].recall_undefined);
  EXPECT_EQ(r.per_class[0].precision, 0.0);
  EXPECT_FALSE(r.per_class[1].precision_undefined);
  EXPECT_EQ(r.f1_macro, 1.0);  // only active classes are averaged
}

TEST(Metrics, MatchBruteForceRecountOnRandomPredictions) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng() % 6, n = 1 + rng() % 60;
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % c);
      pred[i] = rng() % 3 ? truth[i] : static_cast<int>(rng() % c);
    }
    const ConfusionMatrix cm = ConfusionMatrix::from_predictions(truth, pred, c);
    const MetricsReport r = compute_metrics(cm);
    ASSERT_EQ(cm.total(), n);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i];
    ASSERT_NEAR(r.accuracy, static_cast<double>(correct) / static_cast<double>(n), 1e-12);

    double f1_weighted = 0.0, f1_sum = 0.0, weight_sum = 0.0, tp_sum = 0.0;
    std::size_t active = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool t = truth[i] == static_cast<int>(k), p = pred[i] == static_cast<int>(k);
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
      }
      const ClassMetrics& m = r.per_class[k];
      ASSERT_EQ(m.tp, tp);
      ASSERT_EQ(m.fp, fp);
      ASSERT_EQ(m.fn, fn);
      const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
      const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      ASSERT_NEAR(m.precision, prec, 1e-12);
      ASSERT_NEAR(m.recall, rec, 1e-12);
      ASSERT_NEAR(m.f1, f1, 1e-12);
      for (double v : {m.precision, m.recall, m.f1}) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
      const double w = static_cast<double>(tp + fn) / static_cast<double>(n);
      ASSERT_NEAR(m.weight, w, 1e-12);
      f1_weighted += w * f1;
      weight_sum += w;
      tp_sum += static_cast<double>(tp);
      if (tp + fn + fp > 0) ++active, f1_sum += f1;
    }
    ASSERT_NEAR(weight_sum, 1.0, 1e-12);
    ASSERT_NEAR(r.accuracy, tp_sum / static_cast<double>(n), 1e-12);
    ASSERT_NEAR(r.f1_weighted, f1_weighted, 1e-12);
    ASSERT_NEAR(r.f1_macro, f1_sum / static_cast<double>(active), 1e-12);
  }
}

TEST(Metrics, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.5, 0.5}), 1);
  EXPECT_EQ(argmax(std::vector<double>{3.0}), 0);
  EXPECT_EQ(argmax(std::vector<double>{-1, -1, -1}), 0);
}

TEST(ConfusionMatrixTest, CsvAndValidation) {
  ConfusionMatrix cm(2);
  cm.add(0, 1);
  cm.add(1, 1);
  cm.add(1, 1);
  std::ostringstream os;
  cm.write_csv(os);
  EXPECT_EQ(os.str(), "true\\pred,0,1\n0,0,1\n1,0,2\n");
  EXPECT_EQ(cm.trace(), 2u);
  EXPECT_THROW(cm.add(2, 0), LabelError);
  EXPECT_THROW(ConfusionMatrix::from_counts({{1, 2}, {3}}), DimensionError);
}

TEST(Metrics, JsonAndSummaryContainKeyFields) {
  const MetricsReport r = compute_metrics(ConfusionMatrix::from_counts({{5, 5}, {0, 10}}));
  const std::string j = metrics_to_json(r);
  for (const char* key : {"\"accuracy\"", "\"f1_macro\"", "\"f1_weighted\"", "\"per_class\""})
    EXPECT_NE(j.find(key), std::string::npos) << key;
  EXPECT_NE(metrics_summary(r).find("0.7500"), std::string::npos) << metrics_summary(r);
}
