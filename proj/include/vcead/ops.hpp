#pragma once

#include <cstddef>
#include <vector>

#include "vcead/tensor.hpp"

// Differentiable operations. Image tensors are NCHW, feature tensors N x F.
// Every op validates its shapes and throws ShapeError naming the op.
namespace vcead::ops {

struct ConvParams {
  int stride = 1;
  int padding = 0;
};

/// Output extent of a convolution along one spatial axis.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, int stride,
                            int padding);

/// Dense convolution. `weight` is Cout x Cin x K x K; `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, ConvParams params);

/// Per-channel convolution. `weight` is C x 1 x K x K; `bias` may be undefined.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                           const Tensor<T>& bias, ConvParams params);

/// y = x W^T + b with x: N x F, W: O x F, b: O (may be undefined).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight,
                const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// x * relu6(x + 3) / 6
template <typename T>
Tensor<T> hardswish(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// NCHW -> N x C
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor);

/// Per-channel y = x * scale[c] + shift[c] (batch norm with frozen identity
/// statistics).
template <typename T>
Tensor<T> batchnorm_affine(const Tensor<T>& x, const Tensor<T>& scale,
                           const Tensor<T>& shift);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Concatenation of NCHW or N x F tensors along axis 1.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts);

/// x: NCHW, gate: N x C; y[n,c,:,:] = x[n,c,:,:] * gate[n,c]
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& gate);

/// Row-wise softmax over an N x K tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

/// Column `index` of an N x K tensor, shape [N].
template <typename T>
Tensor<T> select_column(const Tensor<T>& x, std::size_t index);

/// Rows of the leading axis, in the given order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Mean of squared elementwise differences over all N elements.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& target, const Tensor<T>& prediction);

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy: -1/N sum y log p + (1 - y) log(1 - p), with p
/// clamped to [eps, 1 - eps]. `labels` and `prob` are both shape [N].
template <typename T>
Tensor<T> ce_loss(const Tensor<T>& labels, const Tensor<T>& prob);

}  // namespace vcead::ops
