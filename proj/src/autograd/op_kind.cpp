// SPDX-License-Identifier: Apache-2.0
#include "xkd/autograd/op_kind.hpp"

#include <array>

#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"

namespace xkd {

namespace {

constexpr std::array kKinds{OpKind::Add,    OpKind::Sub,     OpKind::Mul,    OpKind::Div,       OpKind::ScalarMul,
                            OpKind::Matmul, OpKind::Transpose, OpKind::Reshape, OpKind::Slice,  OpKind::Concat,
                            OpKind::Gather, OpKind::Mean,    OpKind::Sum,    OpKind::Square,    OpKind::Sqrt,
                            OpKind::Exp,    OpKind::Log,     OpKind::Gelu,   OpKind::Softmax,   OpKind::LayerNorm,
                            OpKind::L2Norm};

const Tensor& arg(const std::vector<Tensor>& inputs, std::size_t i, OpKind kind) {
    if (i >= inputs.size()) throw ContractError("op_forward: " + to_string(kind) + " is missing input " + std::to_string(i));
    return inputs[i];
}

int need_axis(const OpAttrs& attrs, OpKind kind) {
    if (!attrs.axis) throw ContractError("op_forward: " + to_string(kind) + " requires an axis");
    return *attrs.axis;
}

}  // namespace

std::span<const OpKind> all_op_kinds() { return kKinds; }

std::string to_string(OpKind kind) {
    switch (kind) {
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::ScalarMul: return "scalar-mul";
        case OpKind::Matmul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Reshape: return "reshape";
        case OpKind::Slice: return "slice";
        case OpKind::Concat: return "concat";
        case OpKind::Gather: return "gather";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::Square: return "square";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Gelu: return "gelu";
        case OpKind::Softmax: return "softmax";
        case OpKind::LayerNorm: return "layer-norm";
        case OpKind::L2Norm: return "l2-norm";
    }
    return "unknown";
}

std::optional<OpKind> parse_op_kind(const std::string& name) {
    for (auto k : kKinds) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

Tensor op_forward(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
    switch (kind) {
        case OpKind::Add: return ops::add(arg(inputs, 0, kind), arg(inputs, 1, kind));
        case OpKind::Sub: return ops::sub(arg(inputs, 0, kind), arg(inputs, 1, kind));
        case OpKind::Mul: return ops::mul(arg(inputs, 0, kind), arg(inputs, 1, kind));
        case OpKind::Div: return ops::div(arg(inputs, 0, kind), arg(inputs, 1, kind));
        case OpKind::ScalarMul: return ops::scale(arg(inputs, 0, kind), attrs.scalar);
        case OpKind::Matmul: return ops::matmul(arg(inputs, 0, kind), arg(inputs, 1, kind));
        case OpKind::Transpose: return ops::transpose(arg(inputs, 0, kind));
        case OpKind::Reshape: return ops::reshape(arg(inputs, 0, kind), attrs.shape);
        case OpKind::Slice: return ops::slice(arg(inputs, 0, kind), need_axis(attrs, kind), attrs.begin, attrs.end);
        case OpKind::Concat: return ops::concat(inputs, need_axis(attrs, kind));
        case OpKind::Gather: return ops::gather_rows(arg(inputs, 0, kind), attrs.indices);
        case OpKind::Mean:
            return attrs.axis ? ops::mean(arg(inputs, 0, kind), *attrs.axis, attrs.keepdim) : ops::mean(arg(inputs, 0, kind));
        case OpKind::Sum:
            return attrs.axis ? ops::sum(arg(inputs, 0, kind), *attrs.axis, attrs.keepdim) : ops::sum(arg(inputs, 0, kind));
        case OpKind::Square: return ops::square(arg(inputs, 0, kind));
        case OpKind::Sqrt: return ops::sqrt(arg(inputs, 0, kind));
        case OpKind::Exp: return ops::exp(arg(inputs, 0, kind));
        case OpKind::Log: return ops::log(arg(inputs, 0, kind), attrs.floor);
        case OpKind::Gelu: return ops::gelu(arg(inputs, 0, kind));
        case OpKind::Softmax: return ops::softmax(arg(inputs, 0, kind));
        case OpKind::LayerNorm: return ops::layer_norm(arg(inputs, 0, kind));
        case OpKind::L2Norm: return ops::l2_normalize(arg(inputs, 0, kind));
    }
    throw ContractError("op_forward: unknown op kind");
}

}  // namespace xkd
