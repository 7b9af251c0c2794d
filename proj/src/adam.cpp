#include "vcead/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace vcead {

template <typename T>
Adam<T>::Adam(ParameterList<T> params, AdamSettings settings)
    : params_(std::move(params)), settings_(settings) {
  if (settings_.lr < 0 || settings_.eps <= 0 || settings_.beta1 < 0 ||
      settings_.beta1 >= 1 || settings_.beta2 < 0 || settings_.beta2 >= 1) {
    throw std::invalid_argument("adam: invalid hyperparameters");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) {
      throw std::invalid_argument("adam: parameter '" + p.name + "' has no gradient");
    }
  }
  ++steps_;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T> t = params_[k].tensor;
    auto w = t.data_mut();
    auto g = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]) +
                        settings_.weight_decay * static_cast<double>(w[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) -
                            settings_.lr * mhat / (std::sqrt(vhat) + settings_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace vcead
