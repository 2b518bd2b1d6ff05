// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xkd/autograd/tensor.hpp"

/// Differentiable operation vocabulary.
///
/// Binary element-wise ops broadcast NumPy-style (trailing alignment, extents
/// equal or 1). Axis-taking ops accept -1 for the last axis.
namespace xkd::ops {

inline constexpr double kNormEps = 1e-6;

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// (m x k) * (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Rows of a 2-D tensor by index; repeated indices allowed.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Sum of all entries, shape [1].
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

Tensor square(const Tensor& x);
/// Throws DomainError on negative input.
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
/// log(max(x, floor)); throws DomainError on negative input. Clamped entries get zero gradient.
Tensor log(const Tensor& x, double floor = 0.0);
/// Exact Gaussian-CDF form 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);
/// Max-subtracted softmax over the last axis.
Tensor softmax(const Tensor& x);
/// Zero-mean unit-variance over the last axis, variance epsilon kNormEps, no affine terms.
Tensor layer_norm(const Tensor& x);
/// x / sqrt(sum x^2 + eps) over the last axis.
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

}  // namespace xkd::ops
