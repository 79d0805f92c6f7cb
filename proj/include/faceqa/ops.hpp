#pragma once

#include <cstddef>
#include <vector>

#include "faceqa/tensor.hpp"

// Differentiable kernels. Every function records its backward pass when an
// input requires grad and GradMode is enabled.
namespace faceqa::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// Natural log; inputs must be positive.
Tensor log(const Tensor& a);

/// x[n,d] + bias[d], bias broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// a[n,k] @ b[k,m]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Columns [start, start+count) of a[n,d].
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Row i of a[n,d] as a [1,d] tensor.
Tensor row(const Tensor& a, std::size_t i);
/// Stacks [d] or [1,d] tensors into [n,d].
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Concatenates [C_i,H,W] tensors along the channel axis.
Tensor concat_channels(const std::vector<Tensor>& parts);

/// Row-wise softmax of a[n,m], max-subtracted.
Tensor softmax_rows(const Tensor& a);
/// Gaussian error linear unit, exact erf form.
Tensor gelu(const Tensor& a);

/// Cross-correlation of x[C_in,H,W] with weight[C_out,C_in,k,k], zero padding.
/// `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t padding);

/// Window bounds follow floor(i*H/out) .. ceil((i+1)*H/out).
Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// x[C,H,W] -> [C]
Tensor global_average_pool(const Tensor& x);
/// x[C,H,W] * s[C], s broadcast over space.
Tensor channel_scale(const Tensor& x, const Tensor& s);

/// Multi-head softmax(QK^T / sqrt(d_h)) V on Q[n,d], K[m,d], V[m,d]; heads
/// work on contiguous d/heads column slices and are concatenated.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads);

/// Mean of squared differences; `target` is treated as a constant.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

}  // namespace faceqa::ops
