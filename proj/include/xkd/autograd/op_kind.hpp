// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xkd/autograd/tensor.hpp"

namespace xkd {

enum class OpKind {
    Add,
    Sub,
    Mul,
    Div,
    ScalarMul,
    Matmul,
    Transpose,
    Reshape,
    Slice,
    Concat,
    Gather,
    Mean,
    Sum,
    Square,
    Sqrt,
    Exp,
    Log,
    Gelu,
    Softmax,
    LayerNorm,
    L2Norm,
};

/// Attributes consumed by the kinds that need them; others ignore them.
struct OpAttrs {
    std::optional<int> axis;  // reductions: absent = all entries; slice/concat: required
    bool keepdim = false;
    double scalar = 1.0;  // scalar-mul factor
    double floor = 0.0;   // log clamp
    std::size_t begin = 0, end = 0;
    Shape shape;
    std::vector<std::size_t> indices;
};

std::span<const OpKind> all_op_kinds();
std::string to_string(OpKind kind);
std::optional<OpKind> parse_op_kind(const std::string& name);

/// Dispatches to the matching function in xkd::ops.
Tensor op_forward(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

}  // namespace xkd
