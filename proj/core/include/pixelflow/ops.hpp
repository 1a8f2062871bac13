#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pixelflow/tensor.hpp"

namespace pixelflow::ops {

// Elementwise binary ops. `b` must have the same shape as `a` or a shape equal
// to a trailing suffix of `a`'s shape (it is then repeated over the leading
// axes). Anything else is a ShapeError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

/// 2-D matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x · w + bias, with x [n, in], w [in, out], bias [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Rows [begin, end) along the first axis.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
/// out[i] = a[index[i]] along the first axis.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);

Tensor softmax(const Tensor& a);
/// Normalizes each row over the last axis to zero mean and unit variance:
/// (x - mean) / sqrt(var + eps). With eps = 0 a constant row maps to zeros.
Tensor layer_norm(const Tensor& a, double eps = 0.0);

/// tanh approximation.
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Scaled dot-product self-attention restricted to contiguous row segments
/// (a block-diagonal mask). q, k, v are [n, heads * head_dim]; segment i
/// covers rows [offsets[i], offsets[i+1]).
Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> offsets, std::size_t heads);

}  // namespace pixelflow::ops
