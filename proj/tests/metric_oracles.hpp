#pragma once

// Hand-written reference formulas for the metric suite, shared by the unit
// tests and the acceptance runner.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "vcead/metrics.hpp"

namespace vcead::testkit {

struct AucInstance {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// 2..200 samples, both classes present, scores on a coarse grid so ties occur.
inline AucInstance random_auc_instance(std::mt19937_64& rng) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 200)(rng);
  const int grid = std::uniform_int_distribution<int>(2, 50)(rng);
  AucInstance inst;
  for (std::size_t i = 0; i < n; ++i) {
    inst.labels.push_back(static_cast<int>(rng() % 2));
    inst.scores.push_back(static_cast<double>(rng() % grid) / grid);
  }
  inst.labels[0] = 0;
  inst.labels[1] = 1;
  return inst;
}

inline double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return wins / pairs;
}

/// Random matrices whose first entries cover every empty-marginal corner.
inline std::vector<metrics::Confusion> random_confusions(std::mt19937_64& rng, std::size_t n) {
  std::vector<metrics::Confusion> out{
      {0, 0, 0, 0}, {0, 7, 0, 3}, {0, 5, 4, 0}, {3, 0, 0, 0}, {0, 0, 2, 0},
      {0, 0, 0, 2}, {0, 4, 0, 0}, {2, 0, 0, 3}, {2, 0, 3, 0}, {0, 3, 3, 0}};
  std::uniform_int_distribution<std::size_t> u(0, 30);
  while (out.size() < n) {
    metrics::Confusion c{u(rng), u(rng), u(rng), u(rng)};
    if (rng() % 4 == 0) c.tp = 0;
    if (rng() % 4 == 0) c.fp = 0;
    out.push_back(c);
  }
  return out;
}

/// precision, recall, f1, accuracy with 0/0 -> 0.
inline std::array<double, 4> hand_prf(const metrics::Confusion& c) {
  const double tp = c.tp, tn = c.tn, fp = c.fp, fn = c.fn;
  const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  // F1 written as 2tp / (2tp + fp + fn), algebraically equal to the harmonic mean.
  const double f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  const double total = tp + tn + fp + fn;
  const double acc = total > 0 ? (tp + tn) / total : 0.0;
  return {p, r, f1, acc};
}

inline double hand_mcc(const metrics::Confusion& c) {
  const double tp = c.tp, tn = c.tn, fp = c.fp, fn = c.fn;
  if (tp + fp == 0 || tp + fn == 0 || tn + fp == 0 || tn + fn == 0) return 0.0;
  return (tp * tn - fp * fn) /
         (std::sqrt(tp + fp) * std::sqrt(tp + fn) * std::sqrt(tn + fp) * std::sqrt(tn + fn));
}

}  // namespace vcead::testkit
