#include "vcead/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "vcead/train.hpp"

namespace vcead::ensemble {

using nlohmann::json;

FeatureVector make_features(const std::array<double, 2>& clf_logits, double mse,
                            const std::array<double, 2>& semi_logits) {
  FeatureVector f;
  f.logit_margin = clf_logits[1] - clf_logits[0];
  f.log_mse = std::log(std::max(mse, kMseFloor));
  f.semi_prob = train::anomaly_probability(semi_logits);
  if (!std::isfinite(f.logit_margin) || !std::isfinite(f.log_mse) || !std::isfinite(f.semi_prob))
    throw EnsembleError("non-finite feature from base learner outputs");
  return f;
}

template <typename T>
std::vector<FeatureVector> extract_features(const nets::ModelBundle<T>& bundle,
                                            const std::vector<data::Sample>& samples,
                                            std::size_t batch) {
  if (!bundle.classifier.trained) throw EnsembleError("classifier is untrained");
  if (!bundle.autoencoder.trained) throw EnsembleError("autoencoder is untrained");
  if (!bundle.semi.trained) throw EnsembleError("semi-supervised learner is untrained");
  const auto clf = train::classifier_logits(bundle.classifier, samples, batch);
  const auto mse = train::reconstruction_errors(bundle.autoencoder, samples, batch);
  const auto semi = train::semi_logits(bundle.semi, samples, batch);
  std::vector<FeatureVector> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out.push_back(make_features(clf[i], mse[i], semi[i]));
  return out;
}

template std::vector<FeatureVector> extract_features(const nets::ModelBundle<float>&,
                                                     const std::vector<data::Sample>&,
                                                     std::size_t);
template std::vector<FeatureVector> extract_features(const nets::ModelBundle<double>&,
                                                     const std::vector<data::Sample>&,
                                                     std::size_t);

Table to_table(const std::vector<FeatureVector>& f) {
  Table t;
  t.reserve(f.size());
  for (const auto& v : f) t.push_back(v.row());
  return t;
}

void write_features_csv(const std::filesystem::path& path, const std::vector<FeatureVector>& f,
                        const std::vector<int>& labels) {
  if (f.size() != labels.size())
    throw EnsembleError("features/labels size mismatch writing " + path.string());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id";
  for (const char* n : kFeatureNames) out << ',' << n;
  out << ",label\n";
  out.precision(17);
  for (std::size_t i = 0; i < f.size(); ++i)
    out << i << ',' << f[i].logit_margin << ',' << f[i].log_mse << ',' << f[i].semi_prob << ','
        << labels[i] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

FeatureFile read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EnsembleError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "sample_id,logit_margin,log_mse,semi_prob,label")
    throw EnsembleError(path.string() + ": unexpected header");
  FeatureFile ff;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 5)
      throw EnsembleError(path.string() + " line " + std::to_string(lineno) + ": expected 5 cells");
    try {
      ff.features.push_back({std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])});
      ff.labels.push_back(std::stoi(cells[4]));
    } catch (const std::logic_error&) {
      throw EnsembleError(path.string() + " line " + std::to_string(lineno) + ": bad number");
    }
  }
  return ff;
}

namespace {

void check_training_set(const Table& x, const std::vector<int>& y, const char* who) {
  if (x.empty()) throw EnsembleError(std::string(who) + ": empty training set");
  if (x.size() != y.size())
    throw EnsembleError(std::string(who) + ": " + std::to_string(x.size()) + " rows for " +
                        std::to_string(y.size()) + " labels");
  const std::size_t m = x.front().size();
  if (m == 0) throw EnsembleError(std::string(who) + ": rows have no features");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != m) throw EnsembleError(std::string(who) + ": ragged feature rows");
    for (double v : x[i])
      if (!std::isfinite(v)) throw EnsembleError(std::string(who) + ": non-finite feature");
    if (y[i] != 0 && y[i] != 1) throw EnsembleError(std::string(who) + ": labels must be 0/1");
    pos += static_cast<std::size_t>(y[i]);
  }
  if (pos == 0 || pos == y.size())
    throw EnsembleError(std::string(who) + ": both classes are required");
}

void check_row(const Row& x, std::size_t m) {
  if (x.size() != m)
    throw EnsembleError("feature row has " + std::to_string(x.size()) + " values, model expects " +
                        std::to_string(m));
  for (double v : x)
    if (std::isnan(v)) throw EnsembleError("NaN feature");
}

// ---- tree growing ----

struct Split {
  int feature = -1;
  double threshold = 0;
  double impurity = std::numeric_limits<double>::infinity();
  std::size_t n_left = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Table& x, const std::vector<int>& y, const ForestParams& p, std::size_t k,
              std::mt19937_64& rng)
      : x_(x), y_(y), p_(p), k_(k), rng_(rng), m_(x.front().size()) {}

  Tree build(std::vector<std::size_t> idx) {
    Tree t;
    grow(t, idx, 0, idx.size(), 1);
    return t;
  }

 private:
  int grow(Tree& t, std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
           std::size_t depth) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    std::size_t pos = 0;
    for (std::size_t i = lo; i < hi; ++i) pos += static_cast<std::size_t>(y_[idx[i]]);
    const std::size_t n = hi - lo;
    t.nodes[id].anomaly_prob = static_cast<double>(pos) / static_cast<double>(n);
    const bool pure = pos == 0 || pos == n;
    const bool deep = p_.max_depth != 0 && depth > p_.max_depth;
    if (pure || deep || n < 2 * p_.min_leaf) return id;

    const Split s = best_split(idx, lo, hi);
    if (s.feature < 0) return id;
    const auto f = static_cast<std::size_t>(s.feature);
    const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx.begin() + static_cast<std::ptrdiff_t>(hi),
                                    [&](std::size_t i) { return x_[i][f] <= s.threshold; });
    const auto cut = static_cast<std::size_t>(mid - idx.begin());
    // Keep child order stable so identical inputs give identical trees.
    std::stable_sort(idx.begin() + static_cast<std::ptrdiff_t>(lo), mid);
    std::stable_sort(mid, idx.begin() + static_cast<std::ptrdiff_t>(hi));
    t.nodes[id].feature = s.feature;
    t.nodes[id].threshold = s.threshold;
    const int l = grow(t, idx, lo, cut, depth + 1);
    const int r = grow(t, idx, cut, hi, depth + 1);
    t.nodes[id].left = l;
    t.nodes[id].right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> order(m_);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    Split best;
    std::vector<std::size_t> sorted(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx.begin() + static_cast<std::ptrdiff_t>(hi));
    // Examine k features; keep going past k only while no valid split exists.
    for (std::size_t fi = 0; fi < m_; ++fi) {
      if (fi >= k_ && best.feature >= 0) break;
      scan_feature(order[fi], sorted, best);
    }
    return best;
  }

  void scan_feature(std::size_t f, std::vector<std::size_t>& rows, Split& best) const {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
    const std::size_t n = rows.size();
    double total_pos = 0;
    for (std::size_t i : rows) total_pos += y_[i];
    double left_pos = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_pos += y_[rows[i]];
      const double a = x_[rows[i]][f], b = x_[rows[i + 1]][f];
      if (a == b) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      if (nl < p_.min_leaf || nr < p_.min_leaf) continue;
      const double gl = gini(left_pos, static_cast<double>(nl));
      const double gr = gini(total_pos - left_pos, static_cast<double>(nr));
      const double imp = (static_cast<double>(nl) * gl + static_cast<double>(nr) * gr) /
                         static_cast<double>(n);
      if (imp < best.impurity) {
        double thr = a + (b - a) / 2;
        if (!(thr < b)) thr = a;
        best = {static_cast<int>(f), thr, imp, nl};
      }
    }
  }

  static double gini(double pos, double n) {
    const double p = pos / n;
    return 2 * p * (1 - p);
  }

  const Table& x_;
  const std::vector<int>& y_;
  const ForestParams& p_;
  std::size_t k_;
  std::mt19937_64& rng_;
  std::size_t m_;
};

Tree fit_tree(const Table& x, const std::vector<int>& y, const ForestParams& p, std::size_t k,
              std::uint64_t seed, std::size_t tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree), 0x7EE5u};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> idx(x.size());
  if (p.bootstrap) {
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    for (auto& i : idx) i = pick(rng);
    std::sort(idx.begin(), idx.end());
  } else {
    std::iota(idx.begin(), idx.end(), 0);
  }
  return TreeBuilder(x, y, p, k, rng).build(std::move(idx));
}

}  // namespace

double Tree::predict(const Row& x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0)
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <=
                                         nodes[i].threshold
                                     ? nodes[i].left
                                     : nodes[i].right);
  return nodes[i].anomaly_prob;
}

double ForestModel::score(const Row& x) const {
  check_row(x, n_features);
  if (trees.empty()) throw EnsembleError("forest has no trees");
  std::vector<double> votes;
  votes.reserve(trees.size());
  for (const auto& t : trees) votes.push_back(t.predict(x));
  // Summing in sorted order makes the mean independent of tree order.
  std::sort(votes.begin(), votes.end());
  return std::accumulate(votes.begin(), votes.end(), 0.0) / static_cast<double>(votes.size());
}

ForestModel fit_forest(const Table& x, const std::vector<int>& y, const ForestParams& params,
                       std::uint64_t seed, std::size_t threads) {
  check_training_set(x, y, "fit_forest");
  if (params.n_trees == 0) throw EnsembleError("fit_forest: n_trees must be positive");
  if (params.min_leaf == 0) throw EnsembleError("fit_forest: min_leaf must be positive");
  const std::size_t m = x.front().size();
  std::size_t k = params.features_per_split;
  if (k == 0) k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
  k = std::min(k, m);

  ForestModel model{params, seed, m, std::vector<Tree>(params.n_trees)};
  threads = std::clamp<std::size_t>(threads, 1, params.n_trees);
  if (threads == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t)
      model.trees[t] = fit_tree(x, y, params, k, seed, t);
    return model;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t = w; t < params.n_trees; t += threads)
        model.trees[t] = fit_tree(x, y, params, k, seed, t);
    });
  for (auto& th : pool) th.join();
  return model;
}

// ---- SVM ----

std::string_view to_string(Kernel k) { return k == Kernel::linear ? "linear" : "rbf"; }

Kernel kernel_from_string(std::string_view s) {
  if (s == "linear") return Kernel::linear;
  if (s == "rbf") return Kernel::rbf;
  throw EnsembleError("unknown kernel '" + std::string(s) + "' (expected linear or rbf)");
}

double kernel_value(Kernel k, double gamma, const Row& a, const Row& b) {
  double acc = 0;
  if (k == Kernel::linear) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  }
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * acc);
}

DualSolution solve_dual(const std::vector<std::vector<double>>& kernel,
                        const std::vector<int>& y_pm, double c, double tol,
                        std::size_t max_iter) {
  const std::size_t n = y_pm.size();
  if (kernel.size() != n) throw EnsembleError("solve_dual: kernel/label size mismatch");
  if (!(c > 0)) throw EnsembleError("solve_dual: C must be positive");
  constexpr double kTau = 1e-12;
  std::vector<double> a(n, 0.0), g(n, -1.0);
  const auto y = [&](std::size_t i) { return static_cast<double>(y_pm[i]); };
  const auto q = [&](std::size_t i, std::size_t j) { return y(i) * y(j) * kernel[i][j]; };
  const auto in_up = [&](std::size_t t) { return (y_pm[t] > 0 && a[t] < c) || (y_pm[t] < 0 && a[t] > 0); };
  const auto in_low = [&](std::size_t t) { return (y_pm[t] > 0 && a[t] > 0) || (y_pm[t] < 0 && a[t] < c); };

  DualSolution sol;
  for (; sol.iterations < max_iter; ++sol.iterations) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (in_up(t) && -y(t) * g[t] >= gmax) {
        if (-y(t) * g[t] > gmax || i == n) i = t;
        gmax = -y(t) * g[t];
      }
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t j = n;
    double obj_min = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, y(t) * g[t]);
      if (i == n) continue;
      const double b = gmax + y(t) * g[t];
      if (b <= 0) continue;
      double quad = kernel[i][i] + kernel[t][t] - 2 * kernel[i][t];
      if (quad <= 0) quad = kTau;
      if (-(b * b) / quad < obj_min) {
        obj_min = -(b * b) / quad;
        j = t;
      }
    }
    if (i == n || j == n || gmax + gmax2 < tol) break;

    const double ai = a[i], aj = a[j];
    if (y_pm[i] != y_pm[j]) {
      double quad = kernel[i][i] + kernel[j][j] + 2 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0) {
        if (a[j] < 0) { a[j] = 0; a[i] = diff; }
      } else if (a[i] < 0) { a[i] = 0; a[j] = -diff; }
      if (diff > 0) {
        if (a[i] > c) { a[i] = c; a[j] = c - diff; }
      } else if (a[j] > c) { a[j] = c; a[i] = c + diff; }
    } else {
      double quad = kernel[i][i] + kernel[j][j] - 2 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (g[i] - g[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c) {
        if (a[i] > c) { a[i] = c; a[j] = sum - c; }
      } else if (a[j] < 0) { a[j] = 0; a[i] = sum; }
      if (sum > c) {
        if (a[j] > c) { a[j] = c; a[i] = sum - c; }
      } else if (a[i] < 0) { a[i] = 0; a[j] = sum; }
    }
    const double di = a[i] - ai, dj = a[j] - aj;
    for (std::size_t t = 0; t < n; ++t) g[t] += q(t, i) * di + q(t, j) * dj;
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y(t) * g[t];
    if (a[t] >= c) {
      if (y_pm[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (y_pm[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2;
  sol.alpha = std::move(a);
  sol.bias = -rho;
  return sol;
}

double SvmModel::decision(const Row& x) const {
  check_row(x, mean.size());
  Row z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / scale[i];
  double acc = bias;
  for (std::size_t s = 0; s < support.size(); ++s)
    acc += coef[s] * kernel_value(params.kernel, params.gamma, support[s], z);
  return acc;
}

SvmModel fit_svm(const Table& x, const std::vector<int>& y, const SvmParams& params,
                 std::uint64_t /*seed*/) {
  check_training_set(x, y, "fit_svm");
  if (!(params.c > 0)) throw EnsembleError("fit_svm: C must be positive");
  if (!(params.gamma > 0)) throw EnsembleError("fit_svm: gamma must be positive");
  if (!(params.tol > 0)) throw EnsembleError("fit_svm: tolerance must be positive");
  const std::size_t n = x.size(), m = x.front().size();

  SvmModel model;
  model.params = params;
  model.mean.assign(m, 0.0);
  model.scale.assign(m, 0.0);
  for (const auto& r : x)
    for (std::size_t f = 0; f < m; ++f) model.mean[f] += r[f];
  for (auto& v : model.mean) v /= static_cast<double>(n);
  for (const auto& r : x)
    for (std::size_t f = 0; f < m; ++f)
      model.scale[f] += (r[f] - model.mean[f]) * (r[f] - model.mean[f]);
  for (auto& v : model.scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v == 0) v = 1;
  }

  Table z(n, Row(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < m; ++f) z[i][f] = (x[i][f] - model.mean[f]) / model.scale[f];
  std::vector<std::vector<double>> k(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      k[i][j] = k[j][i] = kernel_value(params.kernel, params.gamma, z[i], z[j]);
  std::vector<int> ypm(n);
  for (std::size_t i = 0; i < n; ++i) ypm[i] = y[i] == 1 ? 1 : -1;

  const DualSolution sol = solve_dual(k, ypm, params.c, params.tol, params.max_iter);
  for (std::size_t i = 0; i < n; ++i) {
    if (sol.alpha[i] <= 0) continue;
    model.support.push_back(z[i]);
    model.coef.push_back(sol.alpha[i] * ypm[i]);
  }
  model.bias = sol.bias;
  return model;
}

// ---- combiner ----

std::string_view to_string(CombinerKind k) { return k == CombinerKind::forest ? "rf" : "svm"; }

Prediction predict(const ForestModel& m, const Row& x) {
  const double s = m.score(x);
  return {s >= 0.5 ? 1 : 0, s};
}

Prediction predict(const SvmModel& m, const Row& x) {
  const double s = m.decision(x);
  return {s >= 0 ? 1 : 0, s};
}

Prediction Combiner::predict(const Row& x) const {
  return std::visit([&](const auto& m) { return ensemble::predict(m, x); }, model);
}

json to_json(const ForestParams& p) {
  return {{"n_trees", p.n_trees},
          {"max_depth", p.max_depth},
          {"min_leaf", p.min_leaf},
          {"features_per_split", p.features_per_split},
          {"bootstrap", p.bootstrap}};
}

json to_json(const SvmParams& p) {
  return {{"kernel", std::string(to_string(p.kernel))},
          {"c", p.c},
          {"gamma", p.gamma},
          {"tol", p.tol},
          {"max_iter", p.max_iter}};
}

namespace {

ForestParams forest_params_from_json(const json& j) {
  ForestParams p;
  p.n_trees = j.at("n_trees").get<std::size_t>();
  p.max_depth = j.at("max_depth").get<std::size_t>();
  p.min_leaf = j.at("min_leaf").get<std::size_t>();
  p.features_per_split = j.at("features_per_split").get<std::size_t>();
  p.bootstrap = j.at("bootstrap").get<bool>();
  return p;
}

SvmParams svm_params_from_json(const json& j) {
  SvmParams p;
  p.kernel = kernel_from_string(j.at("kernel").get<std::string>());
  p.c = j.at("c").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.tol = j.at("tol").get<double>();
  p.max_iter = j.at("max_iter").get<std::size_t>();
  return p;
}

json node_to_json(const Tree& t, int i) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(i)];
  if (n.feature < 0) return {{"p", n.anomaly_prob}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"p", n.anomaly_prob},
          {"left", node_to_json(t, n.left)},
          {"right", node_to_json(t, n.right)}};
}

int node_from_json(Tree& t, const json& j, std::size_t n_features) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  const double p = j.at("p").get<double>();
  if (!(p >= 0 && p <= 1)) throw EnsembleError("tree leaf probability outside [0, 1]");
  t.nodes[static_cast<std::size_t>(id)].anomaly_prob = p;
  if (!j.contains("feature")) return id;
  const int f = j.at("feature").get<int>();
  if (f < 0 || static_cast<std::size_t>(f) >= n_features)
    throw EnsembleError("tree split feature out of range");
  const double thr = j.at("threshold").get<double>();
  const int l = node_from_json(t, j.at("left"), n_features);
  const int r = node_from_json(t, j.at("right"), n_features);
  auto& node = t.nodes[static_cast<std::size_t>(id)];
  node.feature = f;
  node.threshold = thr;
  node.left = l;
  node.right = r;
  return id;
}

}  // namespace

json Combiner::to_json() const {
  if (const auto* f = std::get_if<ForestModel>(&model)) {
    json trees = json::array();
    for (const auto& t : f->trees) trees.push_back(node_to_json(t, 0));
    return {{"kind", "rf"},
            {"params", ensemble::to_json(f->params)},
            {"seed", f->seed},
            {"n_features", f->n_features},
            {"trees", std::move(trees)}};
  }
  const auto& s = std::get<SvmModel>(model);
  return {{"kind", "svm"}, {"params", ensemble::to_json(s.params)},
          {"mean", s.mean},     {"scale", s.scale},
          {"support", s.support}, {"coef", s.coef},
          {"bias", s.bias}};
}

Combiner Combiner::from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "rf") {
      ForestModel f;
      f.params = forest_params_from_json(j.at("params"));
      f.seed = j.at("seed").get<std::uint64_t>();
      f.n_features = j.at("n_features").get<std::size_t>();
      for (const auto& tj : j.at("trees")) {
        Tree t;
        node_from_json(t, tj, f.n_features);
        f.trees.push_back(std::move(t));
      }
      if (f.trees.empty()) throw EnsembleError("forest has no trees");
      return {std::move(f)};
    }
    if (kind == "svm") {
      SvmModel s;
      s.params = svm_params_from_json(j.at("params"));
      s.mean = j.at("mean").get<std::vector<double>>();
      s.scale = j.at("scale").get<std::vector<double>>();
      s.support = j.at("support").get<Table>();
      s.coef = j.at("coef").get<std::vector<double>>();
      s.bias = j.at("bias").get<double>();
      if (s.scale.size() != s.mean.size() || s.coef.size() != s.support.size())
        throw EnsembleError("svm model arrays disagree in size");
      for (const auto& r : s.support)
        if (r.size() != s.mean.size()) throw EnsembleError("svm support vector width mismatch");
      return {std::move(s)};
    }
    throw EnsembleError("unknown combiner kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw EnsembleError(std::string("malformed combiner JSON: ") + e.what());
  }
}

// ---- search spaces ----

namespace {

template <typename V>
const V& pick(const std::vector<V>& v, std::mt19937_64& rng, const char* what) {
  if (v.empty()) throw EnsembleError(std::string("empty search grid for ") + what);
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

double log_uniform(double lo, double hi, std::mt19937_64& rng) {
  return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

}  // namespace

ForestParams ForestGrid::sample(std::mt19937_64& rng) const {
  ForestParams p;
  p.n_trees = pick(n_trees, rng, "n_trees");
  p.max_depth = pick(max_depth, rng, "max_depth");
  p.min_leaf = pick(min_leaf, rng, "min_leaf");
  p.features_per_split = pick(features_per_split, rng, "features_per_split");
  return p;
}

json ForestGrid::to_json() const {
  return {{"n_trees", n_trees},
          {"max_depth", max_depth},
          {"min_leaf", min_leaf},
          {"features_per_split", features_per_split}};
}

ForestGrid ForestGrid::from_json(const json& j) {
  ForestGrid g;
  for (const auto& [k, v] : j.items()) {
    auto list = v.get<std::vector<std::size_t>>();
    if (k == "n_trees") g.n_trees = std::move(list);
    else if (k == "max_depth") g.max_depth = std::move(list);
    else if (k == "min_leaf") g.min_leaf = std::move(list);
    else if (k == "features_per_split") g.features_per_split = std::move(list);
    else throw EnsembleError("unknown forest grid key '" + k + "'");
  }
  for (auto t : g.n_trees)
    if (t == 0) throw EnsembleError("forest grid: n_trees must be positive");
  for (auto t : g.min_leaf)
    if (t == 0) throw EnsembleError("forest grid: min_leaf must be positive");
  return g;
}

SvmParams SvmGrid::sample(std::mt19937_64& rng) const {
  if (!(c_min > 0 && c_min <= c_max)) throw EnsembleError("svm grid: bad C range");
  if (!(gamma_min > 0 && gamma_min <= gamma_max)) throw EnsembleError("svm grid: bad gamma range");
  SvmParams p;
  p.kernel = pick(kernels, rng, "kernel");
  p.c = log_uniform(c_min, c_max, rng);
  p.gamma = log_uniform(gamma_min, gamma_max, rng);
  return p;
}

json SvmGrid::to_json() const {
  json ks = json::array();
  for (auto k : kernels) ks.push_back(std::string(to_string(k)));
  return {{"kernels", ks}, {"c", {c_min, c_max}}, {"gamma", {gamma_min, gamma_max}}};
}

SvmGrid SvmGrid::from_json(const json& j) {
  SvmGrid g;
  for (const auto& [k, v] : j.items()) {
    if (k == "kernels") {
      g.kernels.clear();
      for (const auto& s : v) g.kernels.push_back(kernel_from_string(s.get<std::string>()));
    } else if (k == "c" || k == "gamma") {
      const auto r = v.get<std::vector<double>>();
      if (r.size() != 2) throw EnsembleError("svm grid: '" + k + "' needs [min, max]");
      (k == "c" ? g.c_min : g.gamma_min) = r[0];
      (k == "c" ? g.c_max : g.gamma_max) = r[1];
    } else {
      throw EnsembleError("unknown svm grid key '" + k + "'");
    }
  }
  if (g.kernels.empty()) throw EnsembleError("svm grid: no kernels");
  if (!(g.c_min > 0 && g.c_min <= g.c_max)) throw EnsembleError("svm grid: bad C range");
  if (!(g.gamma_min > 0 && g.gamma_min <= g.gamma_max))
    throw EnsembleError("svm grid: bad gamma range");
  return g;
}

// ---- random search ----

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<int>& y, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1))
    throw EnsembleError("tuning fraction must lie strictly between 0 and 1");
  std::mt19937_64 rng(seed ^ 0x5EA2C4ull);
  std::vector<std::size_t> fit, held;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(i);
    if (idx.size() < 2)
      throw EnsembleError("random search needs at least two samples of each class, got " +
                          std::to_string(idx.size()) + " of class " + std::to_string(cls));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    fit.insert(fit.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(held.begin(), held.end());
  return {fit, held};
}

SearchResult<ForestParams, ForestModel> search_forest(const Table& x, const std::vector<int>& y,
                                                      const ForestGrid& grid,
                                                      const SearchOptions& opt) {
  return random_search<ForestParams, ForestModel>(
      [&](const Table& a, const std::vector<int>& b, const ForestParams& p, std::uint64_t s) {
        return fit_forest(a, b, p, s, opt.threads);
      },
      [&](std::mt19937_64& rng) { return grid.sample(rng); },
      [](const ForestModel& m, const Row& r) { return m.score(r); },
      [](const ForestParams& p) { return to_json(p); }, x, y, opt);
}

SearchResult<SvmParams, SvmModel> search_svm(const Table& x, const std::vector<int>& y,
                                             const SvmGrid& grid, const SearchOptions& opt) {
  return random_search<SvmParams, SvmModel>(
      [](const Table& a, const std::vector<int>& b, const SvmParams& p, std::uint64_t s) {
        return fit_svm(a, b, p, s);
      },
      [&](std::mt19937_64& rng) { return grid.sample(rng); },
      [](const SvmModel& m, const Row& r) { return m.decision(r); },
      [](const SvmParams& p) { return to_json(p); }, x, y, opt);
}

void write_tuning_log(const std::filesystem::path& path, const std::vector<SearchDraw>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<std::string> keys;
  if (!log.empty())
    for (const auto& [k, v] : log.front().params.items()) keys.push_back(k);
  out << "draw";
  for (const auto& k : keys) out << ',' << k;
  out << ",tuning_auc\n";
  out.precision(17);
  for (const auto& d : log) {
    out << d.draw;
    for (const auto& k : keys) {
      const auto& v = d.params.at(k);
      out << ',';
      if (v.is_string())
        out << v.get<std::string>();
      else
        out << v.dump();
    }
    out << ',' << d.auc << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace vcead::ensemble
