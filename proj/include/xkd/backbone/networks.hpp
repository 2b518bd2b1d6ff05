// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xkd/backbone/layers.hpp"
#include "xkd/views/embed.hpp"
#include "xkd/views/tokens.hpp"

namespace xkd {

struct EncoderConfig {
    std::size_t d_model = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
};

/// Transformer trunk shared between modalities in the agnostic variants.
struct Backbone {
    std::vector<Block> blocks;
    LayerNormParams norm;

    static Backbone init(const EncoderConfig& cfg, Rng& rng);
    std::size_t width() const { return norm.gain.size(1); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct EncoderOutput {
    Tensor sequence;  // (N + 1) x D after the final norm, CLS first
    Tensor cls;       // 1 x D
    Tensor tokens;    // N x D
    /// H x N: final-layer CLS-query attention restricted to patch keys. The
    /// softmax also covers the CLS key, so rows sum to at most one.
    Tensor attn;
    /// Per layer, per head, the full (N + 1) x (N + 1) attention map.
    std::vector<std::vector<Tensor>> layer_attention;
};

EncoderOutput encode(const Backbone& backbone, const Tensor& sequence);

struct DecoderConfig {
    std::size_t width = 32;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
};

struct Decoder {
    Linear in_proj;
    Tensor mask_token;  // 1 x width
    Tensor pos;         // layout.rows() x width
    PositionalLayout layout;
    std::vector<Block> blocks;
    LayerNormParams norm;
    Linear out_proj;  // width -> patch dim

    static Decoder init(const DecoderConfig& cfg, std::size_t d_model, std::size_t patch_dim, PositionalLayout layout,
                        Rng& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

/// Reconstructs the masked patches of `batch` from the encoder output of its
/// kept tokens. Rows follow ascending masked index; no mask gives 0 rows.
Tensor decode(const Decoder& decoder, const EncoderOutput& encoded, const TokenBatch& batch);

enum class HeadActivation { Gelu, Identity };

std::string to_string(HeadActivation a);

struct HeadConfig {
    std::size_t hidden = 128;
    std::size_t bottleneck = 32;
    std::size_t out_dim = 128;
    HeadActivation activation = HeadActivation::Gelu;
    bool normalize_hidden = true;
};

/// Two hidden layers (linear, norm, activation), a bottleneck that is
/// L2-normalized, then a bias-free linear to the output dimension.
struct ProjectorHead {
    Linear fc1, fc2, bottleneck;
    Linear last;
    HeadActivation activation = HeadActivation::Gelu;
    bool normalize_hidden = true;

    static ProjectorHead init(const HeadConfig& cfg, std::size_t in, Rng& rng);
    std::size_t out_dim() const { return last.out_features(); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct ProjectorTrace {
    Tensor hidden1, hidden2;  // post-norm, pre-activation
    Tensor bottleneck;        // post-L2
    Tensor output;
};

/// B x D pooled features to B x J.
Tensor project(const ProjectorHead& head, const Tensor& pooled);
ProjectorTrace project_traced(const ProjectorHead& head, const Tensor& pooled);

/// Mean over patch tokens, 1 x D.
Tensor mean_pool(const Tensor& tokens);

}  // namespace xkd
