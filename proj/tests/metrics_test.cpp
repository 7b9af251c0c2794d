#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metric_oracles.hpp"
#include "vcead/metrics.hpp"

using namespace vcead::metrics;
namespace ko = vcead::testkit;

TEST(AucTest, SpecExamples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{1, 2, 3, 4}, y), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{2, 2, 2, 2}, y), 0.5);
}

TEST(AucTest, SingleClassAndNanAreErrors) {
  EXPECT_THROW(auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), MetricError);
  EXPECT_THROW(auc(std::vector<double>{NAN, 2}, std::vector<int>{0, 1}), MetricError);
}

TEST(AucTest, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = ko::random_auc_instance(rng);
    EXPECT_NEAR(auc(inst.scores, inst.labels), ko::brute_force_auc(inst.scores, inst.labels),
                1e-12);
  }
}

TEST(AucTest, MonotoneTransformAndLabelFlip) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> s(60), t(60);
  std::vector<int> y(60), flipped(60);
  for (std::size_t i = 0; i < 60; ++i) {
    s[i] = nd(rng);
    t[i] = std::exp(3 * s[i]) + 1;
    y[i] = i % 3 == 0;
    flipped[i] = 1 - y[i];
  }
  EXPECT_DOUBLE_EQ(auc(s, y), auc(t, y));
  EXPECT_NEAR(auc(s, y) + auc(s, flipped), 1.0, 1e-12);
}

TEST(MccTest, SpecExamples) {
  EXPECT_DOUBLE_EQ(mcc({1, 1, 0, 0}), 1.0);
  EXPECT_NEAR(mcc({2, 3, 1, 0}), 6 / std::sqrt(72.0), 1e-12);
  EXPECT_DOUBLE_EQ(mcc({1, 1, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(mcc({0, 5, 0, 5}), 0.0);
}

TEST(MccTest, SymmetricUnderClassSwap) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> u(0, 20);
  for (int i = 0; i < 100; ++i) {
    Confusion c{u(rng), u(rng), u(rng), u(rng)};
    EXPECT_NEAR(mcc(c), mcc({c.tn, c.tp, c.fn, c.fp}), 1e-12);
  }
}

TEST(PrfTest, SpecExamples) {
  auto a = prf_accuracy({5, 5, 0, 0});
  EXPECT_EQ(a.precision, 1.0);
  EXPECT_EQ(a.recall, 1.0);
  EXPECT_EQ(a.f1, 1.0);
  EXPECT_EQ(a.accuracy, 1.0);
  auto b = prf_accuracy({0, 7, 0, 3});
  EXPECT_EQ(b.precision, 0.0);
  EXPECT_EQ(b.recall, 0.0);
  EXPECT_EQ(b.f1, 0.0);
  EXPECT_DOUBLE_EQ(b.accuracy, 0.7);
  auto c = prf_accuracy({3, 4, 1, 2});
  EXPECT_DOUBLE_EQ(c.precision, 0.75);
  EXPECT_DOUBLE_EQ(c.recall, 0.6);
  EXPECT_NEAR(c.f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(c.accuracy, 0.7);
  auto empty = prf_accuracy({0, 0, 0, 0});
  EXPECT_EQ(empty.accuracy, 0.0);
}

TEST(PrfTest, RandomMatricesMatchHandFormulas) {
  std::mt19937_64 rng(8);
  for (const auto& c : ko::random_confusions(rng, 100)) {
    const auto got = prf_accuracy(c);
    const auto want = ko::hand_prf(c);
    EXPECT_NEAR(got.precision, want[0], 1e-12);
    EXPECT_NEAR(got.recall, want[1], 1e-12);
    EXPECT_NEAR(got.f1, want[2], 1e-12);
    EXPECT_NEAR(got.accuracy, want[3], 1e-12);
    EXPECT_NEAR(mcc(c), ko::hand_mcc(c), 1e-12);
  }
}

TEST(PerClassTest, ProportionsAndConsistency) {
  const std::vector<int> pred{1, 0, 1, 1}, lab{1, 1, 0, 1};
  const std::vector<std::string> cls{"Ulcer", "Ulcer", "Pylorus", "Erosion"};
  auto m = per_class_proportion(pred, lab, cls);
  EXPECT_DOUBLE_EQ(m["Ulcer"], 0.5);
  EXPECT_DOUBLE_EQ(m["Pylorus"], 0.0);
  EXPECT_DOUBLE_EQ(m["Erosion"], 1.0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> p(80), y(80);
    std::vector<std::string> c(80);
    std::vector<double> s(80);
    for (std::size_t i = 0; i < 80; ++i) {
      y[i] = i < 40 ? 0 : 1;
      p[i] = static_cast<int>(rng() % 2);
      c[i] = "class" + std::to_string(rng() % 5 + 5 * y[i]);
      s[i] = static_cast<double>(rng() % 100);
    }
    auto r = evaluate(s, p, y, c);
    double correct = 0;
    for (const auto& [name, frac] : r.per_class) correct += frac * r.per_class_count[name];
    EXPECT_NEAR(correct, static_cast<double>(r.confusion.tp + r.confusion.tn), 1e-9);
  }
}

TEST(WelchTest, MatchesReferenceValue) {
  const std::vector<double> a{1, 2, 3, 4, 5.5}, b{0, 1, 1, 2, 0.5, 0.25};
  // scipy.stats.ttest_ind(a, b, equal_var=False, alternative="greater")
  EXPECT_NEAR(welch_greater_p(a, b), 0.01923789714852265, 1e-10);
  EXPECT_NEAR(welch_greater_p(b, a), 1 - 0.01923789714852265, 1e-10);
}

TEST(TableTest, RowHasPercentages) {
  Report r;
  r.auc = 0.7686;
  const auto row = table_row("RF ensemble", r);
  EXPECT_NE(row.find("76.86"), std::string::npos);
  EXPECT_NE(table_header().find("F1 Score"), std::string::npos);
}
