#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "ensemble_oracles.hpp"
#include "vcead/ensemble.hpp"
#include "vcead/nets.hpp"

using namespace vcead;
using namespace vcead::ensemble;
using testkit::LabeledTable;

namespace {

LabeledTable blobs(std::size_t per_class, double gap, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  LabeledTable t;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int cls = i < per_class ? 0 : 1;
    const double c = cls ? gap : -gap;
    t.x.push_back({c + g(rng), c + g(rng)});
    t.y.push_back(cls);
  }
  return t;
}

ForestParams single_tree() {
  ForestParams p;
  p.n_trees = 1;
  p.max_depth = 0;
  p.min_leaf = 1;
  p.features_per_split = 0;
  p.bootstrap = false;
  return p;
}

}  // namespace

// ---- features ----

TEST(Features, ZeroLogitsGiveZeroMargin) {
  EXPECT_EQ(make_features({0.0, 0.0}, 0.5, {0.0, 0.0}).logit_margin, 0.0);
  EXPECT_DOUBLE_EQ(make_features({1.0, 3.5}, 0.5, {0.0, 0.0}).logit_margin, 2.5);
}

TEST(Features, PerfectReconstructionHitsFloor) {
  EXPECT_DOUBLE_EQ(make_features({0, 0}, 0.0, {0, 0}).log_mse, std::log(1e-12));
  EXPECT_DOUBLE_EQ(make_features({0, 0}, 0.25, {0, 0}).log_mse, std::log(0.25));
}

TEST(Features, SemiProbabilitySaturates) {
  EXPECT_NEAR(make_features({0, 0}, 1, {0.0, 800.0}).semi_prob, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(make_features({0, 0}, 1, {0.0, 0.0}).semi_prob, 0.5);
}

TEST(Features, FixedArity) {
  EXPECT_EQ(FeatureVector{}.row().size(), kFeatureCount);
  EXPECT_EQ(kFeatureCount, 3u);
}

TEST(Features, UntrainedBundleRejected) {
  using nets::LearnerKind;
  auto b = nets::make_bundle(
      nets::make_learner<float>(LearnerKind::classifier, "desk_identity", 3, 32, 1),
      nets::make_learner<float>(LearnerKind::autoencoder, "desk_identity", 3, 32, 2),
      nets::make_learner<float>(LearnerKind::semi_supervised, "desk_identity", 3, 32, 3));
  data::Sample s{data::Image(3, 32, 32), data::Label::normal, "p", "x"};
  EXPECT_THROW(extract_features(b, {s}), EnsembleError);
  b.classifier.trained = b.autoencoder.trained = b.semi.trained = true;
  const auto f = extract_features(b, {s, s});
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].row(), f[1].row());
  EXPECT_TRUE(std::isfinite(f[0].log_mse));
}

TEST(Features, CsvRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "vcead_features_csv";
  std::filesystem::create_directories(dir);
  const std::vector<FeatureVector> f{{0.1, -3.25, 0.9}, {-2.0 / 3.0, std::log(1e-12), 0.0}};
  write_features_csv(dir / "f.csv", f, {1, 0});
  const auto back = read_features_csv(dir / "f.csv");
  ASSERT_EQ(back.features.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(back.features[i].row(), f[i].row());
  EXPECT_EQ(back.labels, (std::vector<int>{1, 0}));
  std::filesystem::remove_all(dir);
}

// ---- forest ----

TEST(Forest, SingleTreeSeparatesFourPoints) {
  const Table x{{0.3, -5.0, 0.1}, {0.9, -4.0, 0.7}, {0.2, -1.0, 0.4}, {0.8, 0.0, 0.5}};
  const std::vector<int> y{0, 0, 1, 1};
  const Combiner c{fit_forest(x, y, single_tree(), 3)};
  EXPECT_DOUBLE_EQ(testkit::training_accuracy(c, {x, y}), 1.0);
}

TEST(Forest, XorTrainingAccuracy) {
  const auto t = testkit::xor_data(400, 11);
  ForestParams p;
  p.n_trees = 100;
  const Combiner c{fit_forest(t.x, t.y, p, 5)};
  EXPECT_GE(testkit::training_accuracy(c, t), 0.95);
}

TEST(Forest, IdenticalRowsGiveEmpiricalLeaf) {
  const Table x(4, Row{1.0, 2.0});
  const auto m = fit_forest(x, {0, 0, 0, 1}, single_tree(), 0);
  ASSERT_EQ(m.trees[0].nodes.size(), 1u);
  EXPECT_DOUBLE_EQ(m.score({1.0, 2.0}), 0.25);
  EXPECT_EQ(predict(m, {1.0, 2.0}).label, 0);
}

TEST(Forest, RootSplitMatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Table x;
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) {
      x.push_back({u(rng), u(rng), u(rng)});
      y.push_back(u(rng) < 0.4 ? 1 : 0);
    }
    y[0] = 0;
    y[1] = 1;
    ForestParams p = single_tree();
    p.max_depth = 1;
    p.features_per_split = 3;
    const auto m = fit_forest(x, y, p, static_cast<std::uint64_t>(trial));
    const auto& nodes = m.trees[0].nodes;
    ASSERT_EQ(nodes.size(), 3u);
    double nl = 0, pl = 0, nr = 0, pr = 0;
    for (std::size_t r = 0; r < x.size(); ++r) {
      const bool left = x[r][static_cast<std::size_t>(nodes[0].feature)] <= nodes[0].threshold;
      (left ? nl : nr) += 1;
      (left ? pl : pr) += y[r];
    }
    const double got = (nl * 2 * (pl / nl) * (1 - pl / nl) + nr * 2 * (pr / nr) * (1 - pr / nr)) /
                       static_cast<double>(x.size());
    EXPECT_NEAR(got, testkit::best_split_gini(x, y, 1), 1e-12);
  }
}

TEST(Forest, UnanimousStumpsScoreOne) {
  ForestModel m;
  m.n_features = 3;
  Tree leaf;
  leaf.nodes.push_back({-1, 0, -1, -1, 1.0});
  m.trees.assign(7, leaf);
  const auto p = predict(m, {0.0, 0.0, 0.0});
  EXPECT_EQ(p.score, 1.0);
  EXPECT_EQ(p.label, 1);
}

TEST(Forest, MonotoneStumpsNeverDecrease) {
  Table x;
  std::vector<int> y;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-10, 0);
  for (int i = 0; i < 60; ++i) {
    const double v = u(rng);
    x.push_back({v});
    y.push_back(v > -5 ? 1 : 0);
  }
  ForestParams p;
  p.n_trees = 50;
  p.max_depth = 1;
  const auto m = fit_forest(x, y, p, 2);
  double prev = -1;
  for (double v = -12; v <= 2; v += 0.01) {
    const double s = m.score({v});
    EXPECT_GE(s, prev);
    prev = s;
  }
}

TEST(Forest, TreeOrderInvariant) {
  const auto t = testkit::xor_data(200, 4);
  auto m = fit_forest(t.x, t.y, ForestParams{}, 8);
  std::vector<double> before;
  for (const auto& r : t.x) before.push_back(m.score(r));
  std::mt19937_64 rng(1);
  std::shuffle(m.trees.begin(), m.trees.end(), rng);
  for (std::size_t i = 0; i < t.x.size(); ++i) EXPECT_EQ(m.score(t.x[i]), before[i]);
}

TEST(Forest, MonotoneTransformInvariant) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Table x, tx;
    std::vector<int> y;
    for (int i = 0; i < 16; ++i) {
      const Row r{u(rng), u(rng), u(rng)};
      x.push_back(r);
      tx.push_back({std::exp(r[0]), r[1], r[2] * r[2] * r[2] + r[2]});
      y.push_back(r[0] + r[1] + 0.5 * u(rng) > 0 ? 1 : 0);
    }
    y[0] = 0;
    y[1] = 1;
    ForestParams p;
    p.n_trees = 15;
    p.min_leaf = 1;
    p.bootstrap = false;  // every row is in-bag for every tree
    const auto a = fit_forest(x, y, p, static_cast<std::uint64_t>(trial));
    const auto b = fit_forest(tx, y, p, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(a.score(x[i]), b.score(tx[i]));
  }
}

TEST(Forest, DeterministicAndThreadIndependent) {
  const auto t = testkit::xor_data(150, 2);
  const auto a = Combiner{fit_forest(t.x, t.y, ForestParams{}, 77)}.to_json();
  const auto b = Combiner{fit_forest(t.x, t.y, ForestParams{}, 77)}.to_json();
  const auto c = Combiner{fit_forest(t.x, t.y, ForestParams{}, 77, 3)}.to_json();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_NE(a, Combiner{fit_forest(t.x, t.y, ForestParams{}, 78)}.to_json());
}

TEST(Forest, LeafProbabilitiesValid) {
  const auto t = testkit::xor_data(120, 6);
  const auto m = fit_forest(t.x, t.y, ForestParams{}, 1);
  for (const auto& tree : m.trees)
    for (const auto& n : tree.nodes) {
      EXPECT_GE(n.anomaly_prob, 0.0);
      EXPECT_LE(n.anomaly_prob, 1.0);
    }
}

TEST(Forest, RejectsBadInput) {
  EXPECT_THROW(fit_forest({{1.0}, {2.0}}, {1, 1}, ForestParams{}, 0), EnsembleError);
  EXPECT_THROW(fit_forest({}, {}, ForestParams{}, 0), EnsembleError);
  ForestParams p;
  p.n_trees = 0;
  EXPECT_THROW(fit_forest({{1.0}, {2.0}}, {0, 1}, p, 0), EnsembleError);
}

// ---- svm ----

TEST(Svm, OneDimensionalMaxMargin) {
  SvmParams p;
  p.kernel = Kernel::linear;
  p.c = 1e4;
  const auto m = fit_svm({{-1.0}, {1.0}}, {0, 1}, p, 0);
  EXPECT_NEAR(testkit::linear_root(m), 0.0, 1e-3);
  EXPECT_EQ(predict(m, {-1.0}).label, 0);
  EXPECT_EQ(predict(m, {1.0}).label, 1);
}

TEST(Svm, OffsetPairBoundaryAtMidpoint) {
  SvmParams p;
  p.kernel = Kernel::linear;
  p.c = 1e4;
  const auto m = fit_svm({{2.0}, {5.0}}, {0, 1}, p, 0);
  EXPECT_NEAR(testkit::linear_root(m), 3.5, 1e-3);
}

TEST(Svm, SeparableBlobsLinear) {
  const auto t = blobs(50, 1.5, 12);
  SvmParams p;
  p.kernel = Kernel::linear;
  p.c = 10;
  EXPECT_DOUBLE_EQ(testkit::training_accuracy(Combiner{fit_svm(t.x, t.y, p, 0)}, t), 1.0);
}

TEST(Svm, RbfHandlesXor) {
  const auto t = testkit::xor_data(200, 13);
  SvmParams p;
  p.c = 100;
  p.gamma = 2.0;
  EXPECT_GE(testkit::training_accuracy(Combiner{fit_svm(t.x, t.y, p, 0)}, t), 0.9);
}

TEST(Svm, DualCoefficientsBoundedByC) {
  const auto t = testkit::xor_data(80, 3);
  SvmParams p;
  p.c = 0.7;
  const auto m = fit_svm(t.x, t.y, p, 0);
  for (double c : m.coef) EXPECT_LE(std::abs(c), 0.7 + 1e-12);
}

TEST(Svm, TinyGammaGivesConstantMajorityDecision) {
  LabeledTable t = blobs(10, 1.0, 5);
  for (int i = 0; i < 20; ++i) {
    t.x.push_back({-1.0 + 0.05 * i, -0.5});
    t.y.push_back(0);
  }
  SvmParams p;
  p.gamma = 1e-9;
  const auto m = fit_svm(t.x, t.y, p, 0);
  const double d0 = m.decision(t.x[0]);
  for (const auto& r : t.x) {
    EXPECT_NEAR(m.decision(r), d0, 1e-5);
    EXPECT_EQ(predict(m, r).label, 0);
  }
}

TEST(Svm, ZeroDecisionIsAnomaly) {
  SvmModel m;
  m.mean = {0.0};
  m.scale = {1.0};
  m.bias = 0.0;
  const auto p = predict(m, {3.0});
  EXPECT_EQ(p.score, 0.0);
  EXPECT_EQ(p.label, 1);
}

TEST(Svm, DualMatchesBruteForceAndIgnoresDuplicates) {
  // Linear kernel on 1-D points: -2 and -1 negative, +1.5 positive.
  const std::vector<double> pts{-2.0, -1.0, 1.5};
  const std::vector<int> y{-1, -1, 1};
  const double c = 2.0;
  const auto gram = [](const std::vector<double>& v) {
    std::vector<std::vector<double>> k(v.size(), std::vector<double>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) k[i][j] = v[i] * v[j];
    return k;
  };
  const auto decision = [&](const std::vector<double>& v, const std::vector<int>& yy,
                            const std::vector<double>& a, double b, double at) {
    double s = b;
    for (std::size_t i = 0; i < v.size(); ++i) s += a[i] * yy[i] * v[i] * at;
    return s;
  };

  const auto sol = solve_dual(gram(pts), y, c, 1e-6, 100000);
  const auto brute = testkit::brute_force_dual(gram(pts), y, c, 1e-3);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(sol.alpha[i], brute.alpha[i], 2e-3);
  ASSERT_EQ(sol.alpha[0], 0.0);

  // Duplicate the non-support point twice.
  std::vector<double> pts2 = pts;
  std::vector<int> y2 = y;
  pts2.insert(pts2.end(), {-2.0, -2.0});
  y2.insert(y2.end(), {-1, -1});
  const auto sol2 = solve_dual(gram(pts2), y2, c, 1e-6, 100000);
  const auto brute2 = testkit::brute_force_dual(gram(pts2), y2, c, 0.05);
  EXPECT_NEAR(brute2.objective, brute.objective, 0.05);
  for (double at : {-3.0, -0.5, 0.0, 0.25, 2.0})
    EXPECT_NEAR(decision(pts, y, sol.alpha, sol.bias, at),
                decision(pts2, y2, sol2.alpha, sol2.bias, at), 1e-6);
}

TEST(Svm, ModelDecisionIgnoresDuplicateNonSupport) {
  SvmParams p;
  p.kernel = Kernel::linear;
  p.c = 100;
  const auto a = fit_svm({{-1.0}, {1.0}, {-3.0}}, {0, 1, 0}, p, 0);
  const auto b = fit_svm({{-1.0}, {1.0}, {-3.0}, {-3.0}, {-3.0}}, {0, 1, 0, 0, 0}, p, 0);
  EXPECT_NEAR(testkit::linear_root(a), 0.0, 1e-3);
  EXPECT_NEAR(testkit::linear_root(b), 0.0, 1e-3);
}

TEST(Svm, RejectsBadInput) {
  SvmParams p;
  EXPECT_THROW(fit_svm({{1.0}, {2.0}}, {0, 0}, p, 0), EnsembleError);
  p.c = 0;
  EXPECT_THROW(fit_svm({{1.0}, {2.0}}, {0, 1}, p, 0), EnsembleError);
  p.c = 1;
  p.gamma = -1;
  EXPECT_THROW(fit_svm({{1.0}, {2.0}}, {0, 1}, p, 0), EnsembleError);
}

// ---- combiner ----

TEST(Combiner, NanFeatureRejected) {
  const auto t = testkit::xor_data(40, 1);
  const Combiner rf{fit_forest(t.x, t.y, ForestParams{}, 0)};
  const Combiner svm{fit_svm(t.x, t.y, SvmParams{}, 0)};
  const Row bad{0.1, std::nan("")};
  EXPECT_THROW(rf.predict(bad), EnsembleError);
  EXPECT_THROW(svm.predict(bad), EnsembleError);
  EXPECT_THROW(rf.predict({0.1}), EnsembleError);
}

TEST(Combiner, JsonRoundTrip) {
  const auto t = testkit::xor_data(100, 7);
  for (const Combiner& c : {Combiner{fit_forest(t.x, t.y, ForestParams{}, 3)},
                            Combiner{fit_svm(t.x, t.y, SvmParams{}, 0)}}) {
    const auto back = Combiner::from_json(nlohmann::json::parse(c.to_json().dump()));
    EXPECT_EQ(back.kind(), c.kind());
    for (const auto& r : t.x) {
      EXPECT_EQ(back.predict(r).score, c.predict(r).score);
      EXPECT_EQ(back.predict(r).label, c.predict(r).label);
    }
  }
  EXPECT_THROW(Combiner::from_json({{"kind", "boost"}}), EnsembleError);
}

// ---- random search ----

TEST(Search, SingleDrawReturnsIt) {
  const auto t = testkit::xor_data(120, 5);
  ForestGrid g;
  g.n_trees = {10};
  const auto r = search_forest(t.x, t.y, g, {1, 4, 0.5});
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.best_draw, 0u);
  EXPECT_EQ(r.log[0].params, to_json(r.best));
  EXPECT_EQ(r.model.trees.size(), 10u);
}

TEST(Search, DominantConfigurationSelected) {
  // Params = a flag; only flag 7 yields an informative scorer.
  const auto t = testkit::xor_data(100, 8);
  using Model = int;
  std::function<Model(const Table&, const std::vector<int>&, const int&, std::uint64_t)> fit =
      [](const Table&, const std::vector<int>&, const int& p, std::uint64_t) { return p; };
  std::function<int(std::mt19937_64&)> sample = [](std::mt19937_64& rng) {
    return static_cast<int>(rng() % 10);
  };
  std::function<double(const Model&, const Row&)> score = [](const Model& m, const Row& r) {
    return m == 7 ? ((r[0] > 0) != (r[1] > 0) ? 1.0 : 0.0) : 0.5;
  };
  std::function<nlohmann::json(const int&)> describe = [](const int& p) {
    return nlohmann::json{{"flag", p}};
  };
  const auto r = random_search<int, Model>(fit, sample, score, describe, t.x, t.y, {60, 2, 0.5});
  EXPECT_EQ(r.best, 7);
  std::size_t first = 0;
  while (r.log[first].params["flag"] != 7) ++first;
  EXPECT_EQ(r.best_draw, first);
  EXPECT_DOUBLE_EQ(r.log[first].auc, 1.0);
}

TEST(Search, SameSeedSameSelection) {
  const auto t = blobs(40, 0.4, 3);
  const SearchOptions opt{6, 9, 0.5};
  const auto a = search_svm(t.x, t.y, SvmGrid{}, opt);
  const auto b = search_svm(t.x, t.y, SvmGrid{}, opt);
  EXPECT_EQ(a.best_draw, b.best_draw);
  EXPECT_EQ(to_json(a.best), to_json(b.best));
  EXPECT_EQ(Combiner{a.model}.to_json(), Combiner{b.model}.to_json());
}

TEST(Search, EmptyGridRejected) {
  const auto t = testkit::xor_data(40, 5);
  ForestGrid g;
  g.max_depth.clear();
  EXPECT_THROW(search_forest(t.x, t.y, g, {}), EnsembleError);
  SvmGrid s;
  s.kernels.clear();
  EXPECT_THROW(search_svm(t.x, t.y, s, {}), EnsembleError);
  EXPECT_THROW(search_forest(t.x, t.y, ForestGrid{}, {0, 1, 0.5}), EnsembleError);
}

TEST(Search, HoldoutIsStratifiedAndDisjoint) {
  std::vector<int> y(30, 0);
  std::fill(y.begin(), y.begin() + 10, 1);
  const auto [fit, held] = stratified_holdout(y, 0.5, 4);
  EXPECT_EQ(fit.size() + held.size(), 30u);
  std::size_t held_pos = 0;
  for (auto i : held) held_pos += static_cast<std::size_t>(y[i]);
  EXPECT_EQ(held_pos, 5u);
  EXPECT_EQ(held.size(), 15u);
  for (auto i : held) EXPECT_FALSE(std::binary_search(fit.begin(), fit.end(), i));
}

TEST(Search, GridsRoundTripJson) {
  ForestGrid f;
  f.n_trees = {5, 7};
  EXPECT_EQ(ForestGrid::from_json(f.to_json()).to_json(), f.to_json());
  SvmGrid s;
  s.kernels = {Kernel::rbf};
  s.c_max = 5;
  EXPECT_EQ(SvmGrid::from_json(s.to_json()).to_json(), s.to_json());
  EXPECT_THROW(ForestGrid::from_json({{"depth", {1}}}), EnsembleError);
}
