#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcead::metrics {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const Confusion&) const = default;
};

/// Labels and predictions are 0 (normal) or 1 (anomaly).
Confusion confusion(std::span<const int> predictions, std::span<const int> labels);

/// Mann-Whitney AUC with ties counted as one half. Throws MetricError when a
/// class is missing or a score is NaN.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Zero when any marginal is empty.
double mcc(const Confusion& c);

struct Prf {
  double precision = 0, recall = 0, f1 = 0, accuracy = 0;
};
/// 0/0 evaluates to 0.
Prf prf_accuracy(const Confusion& c);

/// Fraction of correctly labeled samples per source class.
std::map<std::string, double> per_class_proportion(std::span<const int> predictions,
                                                   std::span<const int> labels,
                                                   std::span<const std::string> source_classes);

struct Report {
  double auc = 0, recall = 0, accuracy = 0, f1 = 0, mcc = 0, precision = 0;
  Confusion confusion;
  std::map<std::string, double> per_class;
  std::map<std::string, std::size_t> per_class_count;
};

Report evaluate(std::span<const double> scores, std::span<const int> predictions,
                std::span<const int> labels, std::span<const std::string> source_classes);

/// Results table text: name column followed by the six metrics in percent.
std::string table_header();
std::string table_row(const std::string& name, const Report& r);

/// One-sided Welch t-test of mean(a) > mean(b); returns the p-value.
double welch_greater_p(std::span<const double> a, std::span<const double> b);

}  // namespace vcead::metrics
