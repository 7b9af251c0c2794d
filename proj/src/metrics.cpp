#include "vcead/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace vcead::metrics {

namespace {

void check_labels(std::span<const int> labels) {
  for (int l : labels)
    if (l != 0 && l != 1) throw MetricError("labels must be 0 or 1, got " + std::to_string(l));
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw MetricError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(labels.size()) + " labels");
  check_labels(labels);
  check_labels(predictions);
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1)
      (predictions[i] == 1 ? c.tp : c.fn)++;
    else
      (predictions[i] == 1 ? c.fp : c.tn)++;
  }
  return c;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw MetricError("auc: " + std::to_string(scores.size()) + " scores for " +
                      std::to_string(labels.size()) + " labels");
  check_labels(labels);
  for (double s : scores)
    if (std::isnan(s)) throw MetricError("auc: NaN score");
  const std::size_t n = scores.size();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw MetricError("auc: undefined with a single class (" + std::to_string(pos) +
                      " anomalies, " + std::to_string(neg) + " normals)");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based ranks of positives, ties sharing the average rank.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += avg;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double mcc(const Confusion& c) {
  const double tp = c.tp, tn = c.tn, fp = c.fp, fn = c.fn;
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

Prf prf_accuracy(const Confusion& c) {
  Prf r;
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  r.accuracy = ratio(c.tp + c.tn, c.total());
  return r;
}

std::map<std::string, double> per_class_proportion(std::span<const int> predictions,
                                                   std::span<const int> labels,
                                                   std::span<const std::string> source_classes) {
  if (predictions.size() != labels.size() || labels.size() != source_classes.size())
    throw MetricError("per_class_proportion: input lengths differ");
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& t = tally[source_classes[i]];
    t.first += predictions[i] == labels[i];
    ++t.second;
  }
  std::map<std::string, double> out;
  for (const auto& [name, t] : tally)
    out[name] = static_cast<double>(t.first) / static_cast<double>(t.second);
  return out;
}

Report evaluate(std::span<const double> scores, std::span<const int> predictions,
                std::span<const int> labels, std::span<const std::string> source_classes) {
  Report r;
  r.auc = auc(scores, labels);
  r.confusion = confusion(predictions, labels);
  const auto p = prf_accuracy(r.confusion);
  r.precision = p.precision;
  r.recall = p.recall;
  r.f1 = p.f1;
  r.accuracy = p.accuracy;
  r.mcc = mcc(r.confusion);
  r.per_class = per_class_proportion(predictions, labels, source_classes);
  for (const auto& c : source_classes) ++r.per_class_count[c];
  return r;
}

std::string table_header() {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-22s %8s %8s %9s %9s %8s %10s", "Model", "AUC", "Recall",
                "Accuracy", "F1 Score", "MCC", "Precision");
  return buf;
}

std::string table_row(const std::string& name, const Report& r) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-22s %8.2f %8.2f %9.2f %9.2f %8.2f %10.2f", name.c_str(),
                100 * r.auc, 100 * r.recall, 100 * r.accuracy, 100 * r.f1, 100 * r.mcc,
                100 * r.precision);
  return buf;
}

double welch_greater_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw MetricError("welch: need at least 2 values per group");
  auto moments = [](std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  if (se2 == 0.0) return ma > mb ? 0.0 : (ma == mb ? 0.5 : 1.0);
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 /
                    ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace vcead::metrics
