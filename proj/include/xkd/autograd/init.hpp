// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "xkd/autograd/tensor.hpp"
#include "xkd/core/rng.hpp"

namespace xkd {

inline constexpr double kInitStd = 0.02;

/// Trainable leaf drawn from a normal truncated at two standard deviations.
inline Tensor trunc_normal_param(Shape shape, Rng& rng, double std = kInitStd) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.truncated_normal(std);
    return Tensor(std::move(shape), std::move(v), true);
}

inline Tensor zero_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

}  // namespace xkd
