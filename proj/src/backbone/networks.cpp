// SPDX-License-Identifier: Apache-2.0
#include "xkd/backbone/networks.hpp"

#include "xkd/autograd/init.hpp"
#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"

namespace xkd {

std::string to_string(HeadActivation a) { return a == HeadActivation::Gelu ? "gelu" : "identity"; }

Backbone Backbone::init(const EncoderConfig& cfg, Rng& rng) {
    require(cfg.depth >= 1, "encoder depth must be at least 1");
    require(cfg.heads >= 1 && cfg.d_model % cfg.heads == 0, "encoder width must be divisible by the head count");
    Backbone b;
    for (std::size_t i = 0; i < cfg.depth; ++i) b.blocks.push_back(Block::init(cfg.d_model, cfg.heads, cfg.mlp_ratio, rng));
    b.norm = LayerNormParams::init(cfg.d_model);
    return b;
}

void Backbone::collect(const std::string& prefix, NamedParams& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
    norm.collect(prefix + ".norm", out);
}

EncoderOutput encode(const Backbone& backbone, const Tensor& sequence) {
    require(!backbone.blocks.empty(), "encode: backbone has no blocks");
    require(sequence.rank() == 2 && sequence.size(1) == backbone.width(),
            "encode: sequence " + shape_string(sequence.shape()) + " does not match width " +
                std::to_string(backbone.width()));
    require(sequence.size(0) >= 2, "encode: sequence needs CLS and at least one token");
    EncoderOutput out;
    Tensor x = sequence;
    for (const auto& block : backbone.blocks) {
        out.layer_attention.emplace_back();
        x = block(x, &out.layer_attention.back());
    }
    const std::size_t len = sequence.size(0);
    out.sequence = backbone.norm(x);
    out.cls = ops::slice(out.sequence, 0, 0, 1);
    out.tokens = ops::slice(out.sequence, 0, 1, len);
    std::vector<Tensor> rows;
    for (const auto& w : out.layer_attention.back()) rows.push_back(ops::slice(ops::slice(w, 0, 0, 1), 1, 1, len));
    out.attn = rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
    return out;
}

Decoder Decoder::init(const DecoderConfig& cfg, std::size_t d_model, std::size_t patch_dim, PositionalLayout layout,
                      Rng& rng) {
    require(cfg.depth >= 1, "decoder depth must be at least 1");
    Decoder d;
    d.in_proj = Linear::init(d_model, cfg.width, rng);
    d.mask_token = trunc_normal_param({1, cfg.width}, rng);
    d.pos = trunc_normal_param({layout.rows(), cfg.width}, rng);
    d.layout = std::move(layout);
    for (std::size_t i = 0; i < cfg.depth; ++i) d.blocks.push_back(Block::init(cfg.width, cfg.heads, cfg.mlp_ratio, rng));
    d.norm = LayerNormParams::init(cfg.width);
    d.out_proj = Linear::init(cfg.width, patch_dim, rng);
    return d;
}

void Decoder::collect(const std::string& prefix, NamedParams& out) const {
    in_proj.collect(prefix + ".in_proj", out);
    out.emplace_back(prefix + ".mask_token", mask_token);
    out.emplace_back(prefix + ".pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
    norm.collect(prefix + ".norm", out);
    out_proj.collect(prefix + ".out_proj", out);
}

Tensor decode(const Decoder& decoder, const EncoderOutput& encoded, const TokenBatch& batch) {
    const std::size_t n = batch.count();
    const std::size_t kept = batch.kept_indices.size();
    require(encoded.sequence.size(0) == kept + 1,
            "decode: encoder output has " + std::to_string(encoded.sequence.size(0)) + " rows for " +
                std::to_string(kept) + " kept tokens");
    const std::vector<std::size_t> masked = batch.masked_indices();
    if (masked.empty()) return Tensor::zeros({0, decoder.out_proj.out_features()});

    // Source rows: 0 is CLS, 1..kept are encoder tokens, kept + 1 is the mask token.
    const Tensor pool = ops::concat({decoder.in_proj(encoded.sequence), decoder.mask_token}, 0);
    std::vector<std::size_t> src(n + 1, kept + 1);
    src[0] = 0;
    for (std::size_t r = 0; r < kept; ++r) src[1 + batch.kept_indices[r]] = 1 + r;

    const std::size_t base = decoder.layout.offset(batch.grid);
    require(base + n <= decoder.pos.size(0), "decode: positional table too small");
    std::vector<std::size_t> pos_rows(n + 1);
    pos_rows[0] = 0;
    for (std::size_t i = 0; i < n; ++i) pos_rows[1 + i] = base + i;

    Tensor x = ops::add(ops::gather_rows(pool, src), ops::gather_rows(decoder.pos, pos_rows));
    for (const auto& block : decoder.blocks) x = block(x);
    std::vector<std::size_t> out_rows(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i) out_rows[i] = 1 + masked[i];
    return decoder.out_proj(ops::gather_rows(decoder.norm(x), out_rows));
}

ProjectorHead ProjectorHead::init(const HeadConfig& cfg, std::size_t in, Rng& rng) {
    ProjectorHead h;
    h.fc1 = Linear::init(in, cfg.hidden, rng);
    h.fc2 = Linear::init(cfg.hidden, cfg.hidden, rng);
    h.bottleneck = Linear::init(cfg.hidden, cfg.bottleneck, rng);
    h.last = Linear::init(cfg.bottleneck, cfg.out_dim, rng, false);
    h.activation = cfg.activation;
    h.normalize_hidden = cfg.normalize_hidden;
    return h;
}

void ProjectorHead::collect(const std::string& prefix, NamedParams& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
    bottleneck.collect(prefix + ".bottleneck", out);
    last.collect(prefix + ".last", out);
}

ProjectorTrace project_traced(const ProjectorHead& head, const Tensor& pooled) {
    auto hidden = [&](const Linear& l, const Tensor& x) {
        const Tensor y = l(x);
        return head.normalize_hidden ? ops::layer_norm(y) : y;
    };
    auto act = [&](const Tensor& x) { return head.activation == HeadActivation::Gelu ? ops::gelu(x) : x; };
    ProjectorTrace t;
    t.hidden1 = hidden(head.fc1, pooled);
    t.hidden2 = hidden(head.fc2, act(t.hidden1));
    t.bottleneck = ops::l2_normalize(head.bottleneck(act(t.hidden2)));
    t.output = head.last(t.bottleneck);
    return t;
}

Tensor project(const ProjectorHead& head, const Tensor& pooled) { return project_traced(head, pooled).output; }

Tensor mean_pool(const Tensor& tokens) { return ops::mean(tokens, 0, true); }

}  // namespace xkd
