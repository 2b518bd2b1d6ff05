// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>

#include "test_util.hpp"
#include "xkd/autograd/gradcheck.hpp"
#include "xkd/autograd/ops.hpp"
#include "xkd/backbone/model_set.hpp"
#include "xkd/core/error.hpp"

using namespace xkd;
using xkd::testing::random_tensor;
using xkd::testing::to_vector;

namespace {

EncoderConfig small_encoder(std::size_t heads = 2) { return {8, 2, heads, 2}; }

void fill(const Tensor& t, double v) {
    auto span = const_cast<Tensor&>(t).mutable_values();
    std::fill(span.begin(), span.end(), v);
}

ModelConfig small_model() {
    ModelConfig c;
    c.encoder = {8, 1, 2, 2};
    c.decoder = {8, 1, 2, 2};
    c.head = {16, 4, 12};
    return c;
}

}  // namespace

TEST(Encode, AttentionRowsSumToOneAtEveryLayer) {
    Rng rng(1);
    const Backbone b = Backbone::init({16, 3, 4, 2}, rng);
    const auto out = encode(b, random_tensor(rng, {9, 16}));
    ASSERT_EQ(out.layer_attention.size(), 3u);
    for (const auto& layer : out.layer_attention) {
        ASSERT_EQ(layer.size(), 4u);
        for (const auto& w : layer)
            for (std::size_t r = 0; r < 9; ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < 9; ++c) s += w.at(r, c);
                EXPECT_NEAR(s, 1.0, 1e-10);
            }
    }
    EXPECT_EQ(out.attn.shape(), (Shape{4, 8}));
    EXPECT_EQ(out.tokens.shape(), (Shape{8, 16}));
    EXPECT_EQ(out.cls.shape(), (Shape{1, 16}));
}

TEST(Encode, AttnExcludesClsKeyMass) {
    Rng rng(2);
    const Backbone b = Backbone::init(small_encoder(), rng);
    const auto out = encode(b, random_tensor(rng, {5, 8}));
    const Tensor& last = out.layer_attention.back()[1];
    double patch_mass = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_EQ(out.attn.at(1, c), last.at(0, c + 1));
        patch_mass += out.attn.at(1, c);
    }
    EXPECT_NEAR(patch_mass + last.at(0, 0), 1.0, 1e-12);
    EXPECT_LT(patch_mass, 1.0);
}

TEST(Encode, DepthZeroRejected) {
    Rng rng(1);
    EXPECT_THROW(Backbone::init({8, 0, 2, 2}, rng), ContractError);
    Backbone empty;
    empty.norm = LayerNormParams::init(8);
    EXPECT_THROW(encode(empty, Tensor::zeros({3, 8})), ContractError);
}

TEST(Encode, WidthMismatchRejected) {
    Rng rng(1);
    const Backbone b = Backbone::init(small_encoder(), rng);
    EXPECT_THROW(encode(b, Tensor::zeros({3, 6})), ContractError);
}

TEST(Encode, EqualKeysSplitMassWithCls) {
    Rng rng(3);
    Backbone b = Backbone::init({4, 1, 1, 2}, rng);
    fill(b.blocks[0].attn.qkv.weight, 0.0);  // identical (zero) keys for every position
    const auto out = encode(b, random_tensor(rng, {3, 4}));
    ASSERT_EQ(out.attn.shape(), (Shape{1, 2}));
    EXPECT_NEAR(out.attn.at(0, 0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(out.attn.at(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Encode, MeanTokensGradientMatchesFiniteDifferences) {
    Rng rng(4);
    const Backbone b = Backbone::init(small_encoder(), rng);
    const auto f = [&](const std::vector<Tensor>& in) { return ops::mean(encode(b, in[0]).tokens); };
    EXPECT_LT(grad_check(f, {random_tensor(rng, {4, 8})}), 1e-4);
}

TEST(Encode, PermutationEquivariantOverPatchTokens) {
    Rng rng(5);
    const Backbone b = Backbone::init(small_encoder(), rng);
    const Tensor x = random_tensor(rng, {6, 8});
    const std::vector<std::size_t> perm{0, 3, 1, 5, 2, 4};
    const auto a = encode(b, x);
    const auto p = encode(b, ops::gather_rows(x, perm));
    for (std::size_t i = 1; i < 6; ++i)
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(p.sequence.at(i, c), a.sequence.at(perm[i], c), 1e-12);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(p.cls.at(0, c), a.cls.at(0, c), 1e-12);
}

TEST(Decode, EmptyMaskGivesNoRows) {
    Rng rng(6);
    const auto batch = patchify(Video(8, 16, 16, 1), VideoPatch{});
    const auto embed_p = EmbedParams::init(128, 8, PositionalLayout({batch.grid}), rng);
    const Backbone b = Backbone::init(small_encoder(), rng);
    const Decoder d = Decoder::init({8, 1, 2, 2}, 8, 128, PositionalLayout({batch.grid}), rng);
    const Tensor out = decode(d, encode(b, embed(batch, embed_p, true)), batch);
    EXPECT_EQ(out.shape(), (Shape{0, 128}));
}

TEST(Decode, ReturnsMaskedRowsOnly) {
    Rng rng(7);
    auto batch = patchify(Video(8, 16, 16, 1), VideoPatch{});
    batch = mask_tokens(batch, 0.75, rng);
    ASSERT_EQ(batch.masked_indices().size(), 12u);
    const auto embed_p = EmbedParams::init(128, 8, PositionalLayout({batch.grid}), rng);
    const Backbone b = Backbone::init(small_encoder(), rng);
    const Decoder d = Decoder::init({8, 2, 2, 2}, 8, 128, PositionalLayout({batch.grid}), rng);
    const Tensor out = decode(d, encode(b, embed(batch, embed_p, true)), batch);
    EXPECT_EQ(out.shape(), (Shape{12, 128}));
}

TEST(Decode, RowsFollowAscendingMaskedIndex) {
    // Zero decoder blocks' contributions leave position-dependent rows equal to pos + mask token.
    Rng rng(8);
    auto batch = mask_tokens(patchify(Video(8, 16, 16, 1), VideoPatch{}), 0.5, rng);
    const auto embed_p = EmbedParams::init(128, 8, PositionalLayout({batch.grid}), rng);
    const Backbone b = Backbone::init(small_encoder(), rng);
    Decoder d = Decoder::init({8, 1, 2, 2}, 8, 8, PositionalLayout({batch.grid}), rng);
    fill(d.blocks[0].attn.proj.weight, 0.0);
    fill(d.blocks[0].fc2.weight, 0.0);
    fill(d.out_proj.weight, 0.0);
    // Identity readout of the normalized row: out = LN(mask + pos_i) when out_proj is an identity.
    auto w = d.out_proj.weight.mutable_values();
    for (std::size_t i = 0; i < 8; ++i) w[i * 8 + i] = 1.0;
    const Tensor out = decode(d, encode(b, embed(batch, embed_p, true)), batch);
    const auto masked = batch.masked_indices();
    for (std::size_t r = 0; r < masked.size(); ++r) {
        const Tensor row = ops::add(d.mask_token, ops::slice(d.pos, 0, 1 + masked[r], 2 + masked[r]));
        const Tensor expect = d.norm(row);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.at(r, c), expect.at(0, c), 1e-12);
    }
}

TEST(Decode, RejectsMismatchedEncoderOutput) {
    Rng rng(9);
    auto batch = mask_tokens(patchify(Video(8, 16, 16, 1), VideoPatch{}), 0.5, rng);
    const auto embed_p = EmbedParams::init(128, 8, PositionalLayout({batch.grid}), rng);
    const Backbone b = Backbone::init(small_encoder(), rng);
    const Decoder d = Decoder::init({8, 1, 2, 2}, 8, 128, PositionalLayout({batch.grid}), rng);
    EXPECT_THROW(decode(d, encode(b, embed(batch, embed_p, false)), batch), ContractError);
}

TEST(Project, ZeroLastLayerGivesZeroOutput) {
    Rng rng(10);
    ProjectorHead h = ProjectorHead::init({16, 4, 12}, 8, rng);
    fill(h.last.weight, 0.0);
    const Tensor out = project(h, random_tensor(rng, {3, 8}, 5.0));
    EXPECT_EQ(out.shape(), (Shape{3, 12}));
    for (double x : out.values()) EXPECT_EQ(x, 0.0);
}

TEST(Project, BottleneckIsScaleInvariantForLinearPath) {
    Rng rng(11);
    HeadConfig cfg{16, 4, 12, HeadActivation::Identity, false};
    const ProjectorHead h = ProjectorHead::init(cfg, 8, rng);
    // Large enough that the normalization epsilon is negligible.
    const Tensor x = random_tensor(rng, {2, 8}, 1e4);
    const auto a = project_traced(h, x);
    const auto b = project_traced(h, ops::scale(x, 7.5));
    for (std::size_t i = 0; i < a.bottleneck.numel(); ++i) EXPECT_NEAR(a.bottleneck.at(i), b.bottleneck.at(i), 1e-12);
    for (std::size_t r = 0; r < 2; ++r) {
        double n = 0.0;
        for (std::size_t c = 0; c < 4; ++c) n += a.bottleneck.at(r, c) * a.bottleneck.at(r, c);
        EXPECT_NEAR(n, 1.0, 1e-12);
    }
}

TEST(Project, HiddenActivationsHaveUnitVariance) {
    Rng rng(12);
    const ProjectorHead h = ProjectorHead::init({64, 8, 12}, 16, rng);
    // Pre-norm variance far above the norm epsilon.
    for (const Tensor* w : {&h.fc1.weight, &h.fc2.weight})
        for (auto& x : const_cast<Tensor*>(w)->mutable_values()) x *= 100.0;
    const auto t = project_traced(h, random_tensor(rng, {3, 16}, 10.0));
    for (const Tensor* hid : {&t.hidden1, &t.hidden2})
        for (std::size_t r = 0; r < 3; ++r) {
            double m = 0.0, v = 0.0;
            for (std::size_t c = 0; c < 64; ++c) m += hid->at(r, c);
            m /= 64;
            for (std::size_t c = 0; c < 64; ++c) v += (hid->at(r, c) - m) * (hid->at(r, c) - m);
            EXPECT_NEAR(m, 0.0, 1e-12);
            EXPECT_NEAR(v / 64, 1.0, 1e-6);
        }
}

TEST(Project, PaperScaleOutputDimension) {
    const ModelConfig c = ModelConfig::paper_scale();
    EXPECT_EQ(c.head.out_dim, 8192u);
    EXPECT_EQ(c.head.bottleneck, 256u);
    EXPECT_EQ(c.decoder.depth, 4u);
    EXPECT_EQ(c.decoder.width, 384u);
    Rng rng(1);
    const ProjectorHead h = ProjectorHead::init(c.head, c.encoder.d_model, rng);
    EXPECT_EQ(project(h, Tensor::zeros({1, 768})).shape(), (Shape{1, 8192}));
}

namespace {

std::unordered_set<const detail::Node*> nodes_of(const NamedParams& p) {
    std::unordered_set<const detail::Node*> s;
    for (const auto& [n, t] : p) s.insert(&t.node());
    return s;
}

NamedParams of_backbone(const Backbone& b) {
    NamedParams p;
    b.collect("b", p);
    return p;
}

}  // namespace

TEST(ModelSet, MsSharesNothing) {
    Rng rng(1);
    const ModelSet m = build_model_set(small_model(), Variant::MS, rng);
    EXPECT_NE(m.student_video.backbone, m.student_audio.backbone);
    EXPECT_NE(m.teacher_video.backbone, m.teacher_audio.backbone);
    EXPECT_NE(m.teacher_video.backbone, m.student_video.backbone);
    const auto trainable = nodes_of(m.trainable_parameters());
    for (const auto& [name, t] : m.teacher_parameters()) {
        EXPECT_FALSE(trainable.count(&t.node())) << name;
        EXPECT_FALSE(t.requires_grad()) << name;
    }
    const std::size_t per_backbone = of_backbone(*m.student_video.backbone).size();
    NamedParams dec;
    m.decoder_video.collect("d", dec);
    m.decoder_audio.collect("d", dec);
    EXPECT_EQ(m.trainable_parameters().size(), dec.size() + 2 * (4 + per_backbone + 7));
}

TEST(ModelSet, MasCountsStudentBackboneOnce) {
    Rng rng_ms(1), rng_mas(1);
    const ModelSet ms = build_model_set(small_model(), Variant::MS, rng_ms);
    const ModelSet mas = build_model_set(small_model(), Variant::MAS, rng_mas);
    EXPECT_EQ(mas.student_video.backbone, mas.student_audio.backbone);
    EXPECT_NE(mas.teacher_video.backbone, mas.teacher_audio.backbone);
    const std::size_t per_backbone = of_backbone(*ms.student_video.backbone).size();
    EXPECT_EQ(ms.trainable_parameters().size() - mas.trainable_parameters().size(), per_backbone);
    bool named_shared = false;
    for (const auto& [name, t] : mas.trainable_parameters()) named_shared |= name.rfind("student.backbone.", 0) == 0;
    EXPECT_TRUE(named_shared);
    EXPECT_FALSE(mas.student_video.embed.weight.same_object(mas.student_audio.embed.weight));
}

TEST(ModelSet, MatsTeacherBackboneAliased) {
    Rng rng(2);
    const ModelSet m = build_model_set(small_model(), Variant::MATS, rng);
    Tensor w = m.teacher_video.backbone->blocks[0].fc1.weight;
    w.mutable_values()[0] = 42.0;
    EXPECT_EQ(m.teacher_audio.backbone->blocks[0].fc1.weight.at(0), 42.0);
    EXPECT_NE(m.student_video.backbone->blocks[0].fc1.weight.at(0), 42.0);
    bool named = false;
    for (const auto& [name, t] : m.teacher_parameters()) named |= name.rfind("teacher.backbone.", 0) == 0;
    EXPECT_TRUE(named);
    EXPECT_FALSE(m.decoder_video.in_proj.weight.same_object(m.decoder_audio.in_proj.weight));
    EXPECT_FALSE(m.teacher_video.head.last.weight.same_object(m.teacher_audio.head.last.weight));
}

TEST(ModelSet, TeachersStartAsStudentCopies) {
    Rng rng(3);
    const ModelSet m = build_model_set(small_model(), Variant::MS, rng);
    for (const auto& p : ema_pairs(m, 0.9, 0.8)) {
        EXPECT_FALSE(p.teacher.same_object(p.student));
        EXPECT_EQ(to_vector(p.teacher), to_vector(p.student));
    }
}

TEST(ModelSet, InitStatistics) {
    Rng rng(4);
    ModelConfig cfg;
    const ModelSet m = build_model_set(cfg, Variant::MS, rng);
    double sq = 0.0, n = 0.0, max_abs = 0.0;
    const Tensor& w = m.student_video.backbone->blocks[0].fc1.weight;
    for (double x : w.values()) {
        sq += x * x;
        n += 1;
        max_abs = std::max(max_abs, std::abs(x));
    }
    EXPECT_LT(max_abs, 0.04 + 1e-15);
    EXPECT_NEAR(std::sqrt(sq / n), 0.02 * 0.88, 0.002);  // truncation at 2 sigma shrinks the std
    for (double x : m.student_video.backbone->blocks[0].fc1.bias.values()) EXPECT_EQ(x, 0.0);
}

TEST(ModelSet, EmaPairsDeduplicateSharedTeacher) {
    Rng a(5), b(5);
    const ModelSet mas = build_model_set(small_model(), Variant::MAS, a);
    const ModelSet mats = build_model_set(small_model(), Variant::MATS, b);
    const std::size_t per_backbone = of_backbone(*mas.teacher_video.backbone).size();
    const auto pm = ema_pairs(mas, 0.9, 0.8);
    const auto pt = ema_pairs(mats, 0.9, 0.8);
    EXPECT_EQ(pm.size() - pt.size(), per_backbone);
    for (const auto& p : pt) {
        if (p.teacher.same_object(mats.teacher_audio.backbone->norm.gain)) {
            EXPECT_EQ(p.lambda, 0.9);
        }
    }
}

TEST(ModelSet, ClonePreservesValuesAndSharing) {
    Rng rng(6);
    const ModelSet m = build_model_set(small_model(), Variant::MATS, rng);
    const ModelSet c = m.clone();
    const auto src = m.named_parameters(), dst = c.named_parameters();
    ASSERT_EQ(src.size(), dst.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        EXPECT_EQ(src[i].first, dst[i].first);
        EXPECT_FALSE(src[i].second.same_object(dst[i].second));
        EXPECT_EQ(to_vector(src[i].second), to_vector(dst[i].second));
        EXPECT_EQ(src[i].second.requires_grad(), dst[i].second.requires_grad());
    }
    EXPECT_EQ(c.teacher_video.backbone, c.teacher_audio.backbone);
    EXPECT_EQ(c.student_video.backbone, c.student_audio.backbone);
}

TEST(ModelSet, VariantNamesRoundTrip) {
    for (auto v : {Variant::MS, Variant::MAS, Variant::MATS}) EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_FALSE(parse_variant("shared"));
}
