// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "xkd/autograd/tensor.hpp"
#include "xkd/core/rng.hpp"

namespace xkd {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out, undefined when bias-free

    static Linear init(std::size_t in, std::size_t out, Rng& rng, bool bias = true);
    std::size_t in_features() const { return weight.size(0); }
    std::size_t out_features() const { return weight.size(1); }
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// Affine layer norm; gain starts at one, shift at zero.
struct LayerNormParams {
    Tensor gain;
    Tensor shift;

    static LayerNormParams init(std::size_t dim);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct AttentionResult {
    Tensor output;                // L x D
    std::vector<Tensor> weights;  // one L x L softmax map per head
};

/// Multi-head self-attention over a single L x D sequence.
struct SelfAttention {
    Linear qkv;  // D -> 3D, laid out [q | k | v]
    Linear proj;
    std::size_t heads = 1;

    static SelfAttention init(std::size_t dim, std::size_t heads, Rng& rng);
    AttentionResult operator()(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
struct Block {
    LayerNormParams norm1;
    SelfAttention attn;
    LayerNormParams norm2;
    Linear fc1;
    Linear fc2;

    static Block init(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);
    /// Optionally hands back the block's per-head attention maps.
    Tensor operator()(const Tensor& x, std::vector<Tensor>* attention = nullptr) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

std::vector<Tensor> tensors_of(const NamedParams& named);

}  // namespace xkd
