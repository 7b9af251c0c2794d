#pragma once

// Central finite-difference oracle for the reverse-mode engine. Independent
// of the backward rules: it only calls forward ops under NoGradGuard.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vcead/ops.hpp"
#include "vcead/tensor.hpp"

namespace vcead::testkit {

using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;  // norm-wise, worst over inputs
  bool ok = false;
};

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Values bounded away from the listed kinks, so the finite difference never
/// straddles a non-differentiable point.
inline Tensor<double> random_away_from(Shape shape, std::mt19937_64& rng,
                                       std::vector<double> kinks, double lo,
                                       double hi, double margin = 1e-2) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do {
      x = u(rng);
    } while (std::any_of(kinks.begin(), kinks.end(),
                         [&](double k) { return std::abs(x - k) < margin; }));
  }
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Checks d/d(inputs) of sum(f(inputs) * R) for a random fixed R.
inline GradCheckResult grad_check(const Fn& f, std::vector<Tensor<double>> inputs,
                                  std::mt19937_64& rng, double h = 1e-4,
                                  double tol = 1e-4) {
  Tensor<double> probe;
  {
    NoGradGuard guard;
    probe = f(inputs);
  }
  const Tensor<double> weights = random_tensor(probe.shape(), rng);
  auto objective = [&](const std::vector<Tensor<double>>& in) {
    return ops::sum(ops::mul(f(in), weights));
  };

  std::vector<Tensor<double>> leaves;
  for (const auto& t : inputs) {
    leaves.push_back(t.detach());
    leaves.back().set_requires_grad(true);
  }
  Graph<double>::active().clear();
  backward(objective(leaves));

  GradCheckResult result;
  result.ok = true;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<Tensor<double>> work;
    for (const auto& t : inputs) work.push_back(t.detach());
    auto values = work[k].data_mut();
    double diff2 = 0.0, ana2 = 0.0, num2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      NoGradGuard guard;
      values[i] = saved + h;
      const double plus = objective(work).item();
      values[i] = saved - h;
      const double minus = objective(work).item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = leaves[k].has_grad() ? leaves[k].grad()[i] : 0.0;
      diff2 += (numeric - analytic) * (numeric - analytic);
      ana2 += analytic * analytic;
      num2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(ana2), std::sqrt(num2), 1e-8});
    const double rel = std::sqrt(diff2) / denom;
    result.max_rel_error = std::max(result.max_rel_error, rel);
    if (!(rel < tol)) result.ok = false;
  }
  return result;
}

}  // namespace vcead::testkit
