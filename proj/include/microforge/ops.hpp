#pragma once

#include "microforge/tensor.hpp"

// Differentiable primitives. Each records itself on the active tape when any
// input requires a gradient. Binary elementwise ops take equal shapes, or one
// single-element operand which is broadcast; anything else is ShapeMismatch.
namespace microforge::tensor {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor sqrt(const Tensor& x);
Tensor rsqrt(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor clamp_min(const Tensor& x, double lo);

/// Sum of all elements as a rank-0 tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Population variance of all elements.
Tensor variance(const Tensor& x);

/// Sums over the axes where `shape` has extent 1 (same rank as x).
Tensor sum_to(const Tensor& x, const Shape& shape);
/// Repeats extent-1 axes up to `shape` (same rank as x).
Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Mean over the axes where `shape` has extent 1.
Tensor mean_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, const Shape& shape);

/// [n,k] x [k,m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x[b,n] W[n,m] + bias[m].
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Cross-correlation: x[b,c,h,w], k[o,c,s,s] -> [b,o,h',w'], h' = (h+2pad-s)/stride+1.
Tensor conv2d(const Tensor& x, const Tensor& k, int stride = 1, int pad = 0);
/// Adjoint of conv2d with respect to its input (a transposed convolution).
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& k, int stride, int pad, const Shape& x_shape);
/// Adjoint of conv2d with respect to its kernel.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int stride, int pad, const Shape& k_shape);

/// Places x(i,j) at (stride*i, stride*j) of a stride-times larger zero map.
Tensor zero_insert(const Tensor& x, int stride = 2);
/// out(i,j) = x(2i, 2j).
Tensor subsample2(const Tensor& x);
/// Fractionally-strided convolution, k[c,o,s,s]: zero insertion then a padded
/// convolution, so spatial extents scale exactly by `stride`.
Tensor deconv2d(const Tensor& x, const Tensor& k, int stride = 2);
/// Swaps the first two axes of a rank-4 tensor.
Tensor swap01(const Tensor& x);

/// Mean of each 2x2 window.
Tensor avg_pool2(const Tensor& x);
/// Nearest-neighbour 2x enlargement.
Tensor upsample2(const Tensor& x);

/// Channel-axis concatenation of rank-4 tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int start, int count);

}  // namespace microforge::tensor
