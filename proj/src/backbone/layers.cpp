// SPDX-License-Identifier: Apache-2.0
#include "xkd/backbone/layers.hpp"

#include <cmath>

#include "xkd/autograd/init.hpp"
#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"

namespace xkd {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool bias) {
    Linear l;
    l.weight = trunc_normal_param({in, out}, rng);
    if (bias) l.bias = zero_param({1, out});
    return l;
}

Tensor Linear::operator()(const Tensor& x) const {
    require(x.rank() == 2 && x.size(1) == in_features(), "Linear: input width " + shape_string(x.shape()) +
                                                             " does not match weight " + shape_string(weight.shape()));
    Tensor y = ops::matmul(x, weight);
    return bias.defined() ? ops::add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
    return {Tensor::full({1, dim}, 1.0, true), zero_param({1, dim})};
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
    return ops::add(ops::mul(ops::layer_norm(x), gain), shift);
}

void LayerNormParams::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gain", gain);
    out.emplace_back(prefix + ".shift", shift);
}

SelfAttention SelfAttention::init(std::size_t dim, std::size_t heads, Rng& rng) {
    require(heads >= 1 && dim % heads == 0,
            "SelfAttention: width " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
    SelfAttention a;
    a.qkv = Linear::init(dim, 3 * dim, rng);
    a.proj = Linear::init(dim, dim, rng);
    a.heads = heads;
    return a;
}

AttentionResult SelfAttention::operator()(const Tensor& x) const {
    const std::size_t dim = proj.in_features();
    const std::size_t dh = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor packed = qkv(x);
    AttentionResult r;
    std::vector<Tensor> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor q = ops::slice(packed, 1, h * dh, (h + 1) * dh);
        const Tensor k = ops::slice(packed, 1, dim + h * dh, dim + (h + 1) * dh);
        const Tensor v = ops::slice(packed, 1, 2 * dim + h * dh, 2 * dim + (h + 1) * dh);
        const Tensor w = ops::softmax(ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt));
        outs.push_back(ops::matmul(w, v));
        r.weights.push_back(w);
    }
    r.output = proj(heads == 1 ? outs[0] : ops::concat(outs, 1));
    return r;
}

void SelfAttention::collect(const std::string& prefix, NamedParams& out) const {
    qkv.collect(prefix + ".qkv", out);
    proj.collect(prefix + ".proj", out);
}

Block Block::init(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng) {
    Block b;
    b.norm1 = LayerNormParams::init(dim);
    b.attn = SelfAttention::init(dim, heads, rng);
    b.norm2 = LayerNormParams::init(dim);
    b.fc1 = Linear::init(dim, dim * mlp_ratio, rng);
    b.fc2 = Linear::init(dim * mlp_ratio, dim, rng);
    return b;
}

Tensor Block::operator()(const Tensor& x, std::vector<Tensor>* attention) const {
    AttentionResult a = attn(norm1(x));
    if (attention) *attention = std::move(a.weights);
    const Tensor h = ops::add(x, a.output);
    return ops::add(h, fc2(ops::gelu(fc1(norm2(h)))));
}

void Block::collect(const std::string& prefix, NamedParams& out) const {
    norm1.collect(prefix + ".norm1", out);
    attn.collect(prefix + ".attn", out);
    norm2.collect(prefix + ".norm2", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

std::vector<Tensor> tensors_of(const NamedParams& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.push_back(t);
    return out;
}

}  // namespace xkd
