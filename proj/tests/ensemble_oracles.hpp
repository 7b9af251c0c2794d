#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "vcead/ensemble.hpp"

namespace vcead::testkit {

struct LabeledTable {
  ensemble::Table x;
  std::vector<int> y;
};

/// Two uniform features in [-1, 1]; label is 1 when their signs differ.
inline LabeledTable xor_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LabeledTable t;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    t.x.push_back({a, b});
    t.y.push_back((a > 0) != (b > 0) ? 1 : 0);
  }
  return t;
}

inline double training_accuracy(const ensemble::Combiner& c, const LabeledTable& t) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < t.x.size(); ++i) hit += c.predict(t.x[i]).label == t.y[i];
  return static_cast<double>(hit) / static_cast<double>(t.x.size());
}

/// Root of a linear 1-D decision function found from two evaluations.
inline double linear_root(const ensemble::SvmModel& m) {
  const double d0 = m.decision({0.0}), d1 = m.decision({1.0});
  return -d0 / (d1 - d0);
}

/// Weighted Gini of the best single split, by enumerating every
/// (feature, cut between distinct sorted values) pair.
inline double best_split_gini(const ensemble::Table& x, const std::vector<int>& y,
                              std::size_t min_leaf) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = x.size();
  for (std::size_t f = 0; f < x.front().size(); ++f)
    for (std::size_t i = 0; i < n; ++i) {
      const double thr = x[i][f];
      double nl = 0, pl = 0, nr = 0, pr = 0;
      for (std::size_t r = 0; r < n; ++r) {
        if (x[r][f] <= thr) {
          nl += 1;
          pl += y[r];
        } else {
          nr += 1;
          pr += y[r];
        }
      }
      if (nl < static_cast<double>(min_leaf) || nr < static_cast<double>(min_leaf)) continue;
      const double gl = 1 - (pl / nl) * (pl / nl) - (1 - pl / nl) * (1 - pl / nl);
      const double gr = 1 - (pr / nr) * (pr / nr) - (1 - pr / nr) * (1 - pr / nr);
      best = std::min(best, (nl * gl + nr * gr) / static_cast<double>(n));
    }
  return best;
}

struct BruteDual {
  std::vector<double> alpha;
  double objective = 0;
};

/// Minimises the SVM dual over a grid of step h on [0, C]^n restricted to
/// y'a = 0, eliminating the last coefficient through the equality constraint.
inline BruteDual brute_force_dual(const std::vector<std::vector<double>>& k,
                                  const std::vector<int>& y, double c, double h) {
  const std::size_t n = y.size();
  const auto steps = static_cast<std::size_t>(std::llround(c / h));
  BruteDual best{{}, std::numeric_limits<double>::infinity()};
  std::vector<std::size_t> idx(n - 1, 0);
  std::vector<double> a(n);
  while (true) {
    double s = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      a[i] = static_cast<double>(idx[i]) * h;
      s += y[i] * a[i];
    }
    a[n - 1] = -s * y[n - 1];
    if (a[n - 1] >= -1e-12 && a[n - 1] <= c + 1e-12) {
      double obj = 0;
      for (std::size_t i = 0; i < n; ++i) {
        obj -= a[i];
        for (std::size_t j = 0; j < n; ++j) obj += 0.5 * a[i] * a[j] * y[i] * y[j] * k[i][j];
      }
      if (obj < best.objective) best = {a, obj};
    }
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] > steps) idx[d++] = 0;
    if (d == idx.size()) break;
  }
  return best;
}

}  // namespace vcead::testkit
