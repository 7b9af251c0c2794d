#include "vcead/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace vcead {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  if (!impl_->is_leaf) {
    throw std::logic_error("tensor: requires_grad can only be set on leaves");
  }
  impl_->requires_grad = value;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename T>
Graph<T>& Graph<T>::active() {
  thread_local Graph graph;
  return graph;
}

template <typename T>
bool record_op(const char* op, std::vector<Tensor<T>> inputs, Tensor<T>& out,
               std::function<void()> backward_fn) {
  if (!grad_enabled()) return false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return false;
  out.mark_non_leaf();
  Graph<T>::active().record(
      Node<T>{op, std::move(inputs), out, std::move(backward_fn)});
  return true;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  }
  auto& graph = Graph<T>::active();
  if (graph.empty()) {
    throw std::logic_error("backward: graph is empty; loss was not recorded");
  }
  Tensor<T> root = loss;
  root.grad_mut()[0] += T(1);
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  graph.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template bool record_op(const char*, std::vector<Tensor<float>>, Tensor<float>&,
                        std::function<void()>);
template bool record_op(const char*, std::vector<Tensor<double>>,
                        Tensor<double>&, std::function<void()>);

}  // namespace vcead
