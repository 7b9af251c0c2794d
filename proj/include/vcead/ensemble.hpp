#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vcead/data.hpp"
#include "vcead/metrics.hpp"
#include "vcead/nets.hpp"

namespace vcead::ensemble {

class EnsembleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Row = std::vector<double>;
using Table = std::vector<Row>;

// ---- base-learner features ----

inline constexpr std::size_t kFeatureCount = 3;
inline constexpr double kMseFloor = 1e-12;
inline const std::array<const char*, kFeatureCount> kFeatureNames{"logit_margin", "log_mse",
                                                                  "semi_prob"};

struct FeatureVector {
  double logit_margin = 0;  // anomaly logit - normal logit
  double log_mse = 0;       // ln(max(mse, 1e-12))
  double semi_prob = 0;     // softmax anomaly probability of the semi head

  Row row() const { return {logit_margin, log_mse, semi_prob}; }
};

FeatureVector make_features(const std::array<double, 2>& clf_logits, double mse,
                            const std::array<double, 2>& semi_logits);

/// Runs the three learners on every sample. Throws EnsembleError when a
/// learner is untrained.
template <typename T>
std::vector<FeatureVector> extract_features(const nets::ModelBundle<T>& bundle,
                                            const std::vector<data::Sample>& samples,
                                            std::size_t batch = 64);

Table to_table(const std::vector<FeatureVector>& f);

/// CSV `sample_id,logit_margin,log_mse,semi_prob,label`.
void write_features_csv(const std::filesystem::path& path, const std::vector<FeatureVector>& f,
                        const std::vector<int>& labels);
struct FeatureFile {
  std::vector<FeatureVector> features;
  std::vector<int> labels;
};
FeatureFile read_features_csv(const std::filesystem::path& path);

// ---- random forest ----

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;  // 0 = unlimited
  std::size_t min_leaf = 2;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(features))
  bool bootstrap = true;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1, right = -1;  // left takes value <= threshold
  double anomaly_prob = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const Row& x) const;
};

struct ForestModel {
  ForestParams params;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  std::vector<Tree> trees;

  /// Mean leaf anomaly probability.
  double score(const Row& x) const;
};

/// Gini splits on bootstrap resamples with a random feature subset per node.
/// Each tree draws from its own seed, so the result does not depend on `threads`.
ForestModel fit_forest(const Table& x, const std::vector<int>& y, const ForestParams& params,
                       std::uint64_t seed, std::size_t threads = 1);

// ---- support vector machine ----

enum class Kernel { linear, rbf };
std::string_view to_string(Kernel k);
Kernel kernel_from_string(std::string_view s);

struct SvmParams {
  Kernel kernel = Kernel::rbf;
  double c = 1.0;
  double gamma = 0.5;
  double tol = 1e-3;
  std::size_t max_iter = 200000;
};

struct SvmModel {
  SvmParams params;
  std::vector<double> mean, scale;  // z-scoring from the training set
  Table support;                    // standardized support vectors
  std::vector<double> coef;         // alpha_i * y_i
  double bias = 0;

  /// Signed kernel expansion on the raw feature row.
  double decision(const Row& x) const;
};

struct DualSolution {
  std::vector<double> alpha;
  double bias = 0;
  std::size_t iterations = 0;
};

/// Solves min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0 with Q = y y' * K by
/// SMO with second-order working-set selection. y holds +-1.
DualSolution solve_dual(const std::vector<std::vector<double>>& kernel,
                        const std::vector<int>& y_pm, double c, double tol,
                        std::size_t max_iter);

double kernel_value(Kernel k, double gamma, const Row& a, const Row& b);

SvmModel fit_svm(const Table& x, const std::vector<int>& y, const SvmParams& params,
                 std::uint64_t seed);

// ---- unified combiner ----

enum class CombinerKind { forest, svm };
std::string_view to_string(CombinerKind k);

struct Prediction {
  int label = 0;
  double score = 0;
};

struct Combiner {
  std::variant<ForestModel, SvmModel> model;

  CombinerKind kind() const {
    return std::holds_alternative<ForestModel>(model) ? CombinerKind::forest : CombinerKind::svm;
  }
  /// Forest: score >= 0.5 is an anomaly. SVM: decision >= 0 is an anomaly.
  /// Throws EnsembleError on a NaN feature.
  Prediction predict(const Row& x) const;

  nlohmann::json to_json() const;
  static Combiner from_json(const nlohmann::json& j);
};

Prediction predict(const ForestModel& m, const Row& x);
Prediction predict(const SvmModel& m, const Row& x);

// ---- random search ----

struct ForestGrid {
  std::vector<std::size_t> n_trees{50, 100, 200};
  std::vector<std::size_t> max_depth{2, 4, 6, 8, 12, 0};
  std::vector<std::size_t> min_leaf{1, 2, 4, 8};
  std::vector<std::size_t> features_per_split{1, 2, 3};

  ForestParams sample(std::mt19937_64& rng) const;
  nlohmann::json to_json() const;
  static ForestGrid from_json(const nlohmann::json& j);
};

/// Kernel from a choice list; C and gamma log-uniform in their ranges.
struct SvmGrid {
  std::vector<Kernel> kernels{Kernel::linear, Kernel::rbf};
  double c_min = 1e-2, c_max = 1e2;
  double gamma_min = 1e-3, gamma_max = 1e1;

  SvmParams sample(std::mt19937_64& rng) const;
  nlohmann::json to_json() const;
  static SvmGrid from_json(const nlohmann::json& j);
};

nlohmann::json to_json(const ForestParams& p);
nlohmann::json to_json(const SvmParams& p);

struct SearchDraw {
  std::size_t draw = 0;
  nlohmann::json params;
  double auc = 0;
};

template <typename Params, typename Model>
struct SearchResult {
  Params best;
  std::size_t best_draw = 0;
  Model model;  // refit on the full table
  std::vector<SearchDraw> log;
};

struct SearchOptions {
  std::size_t n_draws = 50;
  std::uint64_t seed = 0;
  double tune_fraction = 0.5;  // stratified share held out for scoring draws
  std::size_t threads = 1;     // forest fitting only
};

/// Stratified split of row indices: (fit part, held-out part).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<int>& y, double fraction, std::uint64_t seed);

/// Draws n_draws configurations, fits each on the fit part and scores AUC on
/// the held-out part. The earliest best draw wins; it is refit on all rows.
template <typename Params, typename Model>
SearchResult<Params, Model> random_search(
    const std::function<Model(const Table&, const std::vector<int>&, const Params&,
                              std::uint64_t)>& fit,
    const std::function<Params(std::mt19937_64&)>& sample_params,
    const std::function<double(const Model&, const Row&)>& score,
    const std::function<nlohmann::json(const Params&)>& describe, const Table& x,
    const std::vector<int>& y, const SearchOptions& opt);

SearchResult<ForestParams, ForestModel> search_forest(const Table& x, const std::vector<int>& y,
                                                      const ForestGrid& grid,
                                                      const SearchOptions& opt);
SearchResult<SvmParams, SvmModel> search_svm(const Table& x, const std::vector<int>& y,
                                             const SvmGrid& grid, const SearchOptions& opt);

void write_tuning_log(const std::filesystem::path& path, const std::vector<SearchDraw>& log);

template <typename Params, typename Model>
SearchResult<Params, Model> random_search(
    const std::function<Model(const Table&, const std::vector<int>&, const Params&,
                              std::uint64_t)>& fit,
    const std::function<Params(std::mt19937_64&)>& sample_params,
    const std::function<double(const Model&, const Row&)>& score,
    const std::function<nlohmann::json(const Params&)>& describe, const Table& x,
    const std::vector<int>& y, const SearchOptions& opt) {
  if (opt.n_draws == 0) throw EnsembleError("random search needs at least one draw");
  if (x.size() != y.size())
    throw EnsembleError("random search: " + std::to_string(x.size()) + " rows for " +
                        std::to_string(y.size()) + " labels");
  const auto [fit_idx, tune_idx] = stratified_holdout(y, opt.tune_fraction, opt.seed);
  Table fit_x, tune_x;
  std::vector<int> fit_y, tune_y;
  for (std::size_t i : fit_idx) {
    fit_x.push_back(x[i]);
    fit_y.push_back(y[i]);
  }
  for (std::size_t i : tune_idx) {
    tune_x.push_back(x[i]);
    tune_y.push_back(y[i]);
  }

  std::mt19937_64 rng(opt.seed);
  SearchResult<Params, Model> out{};
  double best_auc = -1.0;
  for (std::size_t d = 0; d < opt.n_draws; ++d) {
    const Params p = sample_params(rng);
    const Model m = fit(fit_x, fit_y, p, opt.seed);
    std::vector<double> s;
    s.reserve(tune_x.size());
    for (const auto& r : tune_x) s.push_back(score(m, r));
    const double a = metrics::auc(s, tune_y);
    out.log.push_back({d, describe(p), a});
    if (a > best_auc) {
      best_auc = a;
      out.best = p;
      out.best_draw = d;
    }
  }
  out.model = fit(x, y, out.best, opt.seed);
  return out;
}

}  // namespace vcead::ensemble
