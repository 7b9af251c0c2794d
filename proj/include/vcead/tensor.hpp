#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcead {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when an operation receives inputs whose extents do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

/// Dense row-major array with optional participation in the gradient tape.
///
/// Tensor is a handle: copies share storage. Leaves created with
/// requires_grad accumulate gradients across backward passes until
/// zero_grad() is called; non-leaf outputs of recorded ops receive
/// gradients only while their graph is alive.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  /// Direct write access; intended for leaves (initialization, optimizers).
  std::span<T> data_mut() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated as zeros on first access. Gradients are
  /// tape state rather than value, so this is available on const handles.
  std::span<T> grad_mut() const;
  /// Fills the gradient with zeros, allocating it if absent.
  void zero_grad() const;
  void clear_grad() const { impl_->grad.clear(); }

  /// Deep copy of the values, detached from any graph.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Used by the op layer when recording.
  void mark_non_leaf() const {
    impl_->requires_grad = true;
    impl_->is_leaf = false;
  }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

/// One recorded operation.
template <typename T>
struct Node {
  const char* op = "";
  std::vector<Tensor<T>> inputs;
  Tensor<T> output;
  std::function<void()> backward;
};

/// Append-only tape of the ops executed on this thread. Recording order is a
/// topological order, so the reverse pass walks it back to front.
template <typename T>
class Graph {
 public:
  static Graph& active();

  void record(Node<T> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<Node<T>>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node<T>> nodes_;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Reverse pass from a scalar loss over the active graph, then resets it.
template <typename T>
void backward(const Tensor<T>& loss);

/// Records `out` as produced from `inputs` when any input requires grad and
/// recording is enabled. Returns true if recorded.
template <typename T>
bool record_op(const char* op, std::vector<Tensor<T>> inputs, Tensor<T>& out,
               std::function<void()> backward_fn);

}  // namespace vcead
