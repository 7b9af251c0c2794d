#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcead/tensor.hpp"

namespace vcead {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam with bias-corrected moments. Moment buffers are kept in double
/// regardless of the parameter precision.
template <typename T>
class Adam {
 public:
  Adam(ParameterList<T> params, AdamSettings settings);

  /// Throws std::invalid_argument naming the first parameter without a grad.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const AdamSettings& settings() const { return settings_; }
  const ParameterList<T>& parameters() const { return params_; }

 private:
  ParameterList<T> params_;
  AdamSettings settings_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace vcead
