// SPDX-License-Identifier: Apache-2.0
#include "xkd/backbone/model_set.hpp"

#include <unordered_set>

#include "xkd/core/error.hpp"

namespace xkd {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::MS: return "ms";
        case Variant::MAS: return "mas";
        case Variant::MATS: return "mats";
    }
    return "unknown";
}

std::optional<Variant> parse_variant(const std::string& s) {
    for (auto v : {Variant::MS, Variant::MAS, Variant::MATS})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

ModelConfig ModelConfig::paper_scale() {
    ModelConfig c;
    c.encoder = {768, 12, 12, 4};
    c.decoder = {384, 4, 12, 4};
    c.head.hidden = 2048;
    c.head.bottleneck = 256;
    c.head.out_dim = 8192;
    c.video_patch_dim = 4 * 16 * 16 * 3;
    c.audio_patch_dim = 4 * 16;
    c.video_grids = {{8, 7, 7}, {2, 6, 6}};
    c.audio_grids = {{20, 28}, {20, 7}};
    return c;
}

namespace {

void collect_network(const Network& n, const std::string& role, const std::string& modality, bool shared_backbone,
                     NamedParams& out) {
    const std::string base = role + "." + modality;
    for (const auto& [name, t] : std::vector<std::pair<std::string, Tensor>>{
             {".embed.weight", n.embed.weight}, {".embed.bias", n.embed.bias},
             {".embed.pos", n.embed.pos},       {".embed.cls", n.embed.cls}})
        out.emplace_back(base + name, t);
    n.backbone->collect(shared_backbone ? role + ".backbone" : base + ".backbone", out);
    n.head.collect(base + ".head", out);
}

NamedParams dedupe(const NamedParams& in) {
    std::unordered_set<const detail::Node*> seen;
    NamedParams out;
    for (const auto& [name, t] : in)
        if (seen.insert(&t.node()).second) out.emplace_back(name, t);
    return out;
}

Network copy_as_teacher(const Network& student, const std::shared_ptr<Backbone>& backbone) {
    auto leaf = [](const Tensor& t) { return t.defined() ? t.clone(false) : Tensor(); };
    auto linear = [&](const Linear& l) { return Linear{leaf(l.weight), leaf(l.bias)}; };
    Network t;
    t.embed.weight = leaf(student.embed.weight);
    t.embed.bias = leaf(student.embed.bias);
    t.embed.pos = leaf(student.embed.pos);
    t.embed.cls = leaf(student.embed.cls);
    t.embed.layout = student.embed.layout;
    t.backbone = backbone;
    t.head = student.head;
    t.head.fc1 = linear(student.head.fc1);
    t.head.fc2 = linear(student.head.fc2);
    t.head.bottleneck = linear(student.head.bottleneck);
    t.head.last = linear(student.head.last);
    return t;
}

std::shared_ptr<Backbone> copy_backbone(const Backbone& b) {
    auto leaf = [](const Tensor& t) { return t.clone(false); };
    auto linear = [&](const Linear& l) { return Linear{leaf(l.weight), leaf(l.bias)}; };
    auto norm = [&](const LayerNormParams& n) { return LayerNormParams{leaf(n.gain), leaf(n.shift)}; };
    auto out = std::make_shared<Backbone>();
    for (const auto& blk : b.blocks) {
        Block c;
        c.norm1 = norm(blk.norm1);
        c.attn.qkv = linear(blk.attn.qkv);
        c.attn.proj = linear(blk.attn.proj);
        c.attn.heads = blk.attn.heads;
        c.norm2 = norm(blk.norm2);
        c.fc1 = linear(blk.fc1);
        c.fc2 = linear(blk.fc2);
        out->blocks.push_back(std::move(c));
    }
    out->norm = norm(b.norm);
    return out;
}

void zip_pairs(const NamedParams& teacher, const NamedParams& student, double lambda, std::vector<EmaPair>& out,
               std::unordered_set<const detail::Node*>& seen) {
    require(teacher.size() == student.size(), "ema_pairs: teacher and student layouts differ");
    for (std::size_t i = 0; i < teacher.size(); ++i)
        if (seen.insert(&teacher[i].second.node()).second)
            out.push_back({teacher[i].second, student[i].second, lambda});
}

}  // namespace

NamedParams ModelSet::trainable_parameters() const {
    const bool shared = variant != Variant::MS;
    NamedParams all;
    decoder_video.collect("decoder.video", all);
    decoder_audio.collect("decoder.audio", all);
    collect_network(student_video, "student", "video", shared, all);
    collect_network(student_audio, "student", "audio", shared, all);
    return dedupe(all);
}

NamedParams ModelSet::teacher_parameters() const {
    const bool shared = variant == Variant::MATS;
    NamedParams all;
    collect_network(teacher_video, "teacher", "video", shared, all);
    collect_network(teacher_audio, "teacher", "audio", shared, all);
    return dedupe(all);
}

NamedParams ModelSet::named_parameters() const {
    NamedParams all = trainable_parameters();
    const NamedParams t = teacher_parameters();
    all.insert(all.end(), t.begin(), t.end());
    return dedupe(all);
}

ModelSet ModelSet::clone() const {
    Rng scratch(0);
    ModelSet copy = build_model_set(config, variant, scratch);
    const NamedParams src = named_parameters();
    const NamedParams dst = copy.named_parameters();
    require(src.size() == dst.size(), "ModelSet::clone: layout mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        require(src[i].first == dst[i].first, "ModelSet::clone: parameter order mismatch at " + src[i].first);
        const auto from = src[i].second.values();
        Tensor target = dst[i].second;
        auto to = target.mutable_values();
        std::copy(from.begin(), from.end(), to.begin());
    }
    return copy;
}

ModelSet build_model_set(const ModelConfig& cfg, Variant variant, Rng& rng) {
    require(!cfg.video_grids.empty() && !cfg.audio_grids.empty(), "build_model_set: view grids are required");
    const std::size_t d = cfg.encoder.d_model;
    ModelSet m;
    m.variant = variant;
    m.config = cfg;

    m.student_video.embed = EmbedParams::init(cfg.video_patch_dim, d, PositionalLayout(cfg.video_grids), rng);
    m.student_video.backbone = std::make_shared<Backbone>(Backbone::init(cfg.encoder, rng));
    m.student_video.head = ProjectorHead::init(cfg.head, d, rng);

    m.student_audio.embed = EmbedParams::init(cfg.audio_patch_dim, d, PositionalLayout(cfg.audio_grids), rng);
    m.student_audio.backbone = variant == Variant::MS ? std::make_shared<Backbone>(Backbone::init(cfg.encoder, rng))
                                                       : m.student_video.backbone;
    m.student_audio.head = ProjectorHead::init(cfg.head, d, rng);

    m.decoder_video = Decoder::init(cfg.decoder, d, cfg.video_patch_dim, PositionalLayout({cfg.video_grids[0]}), rng);
    m.decoder_audio = Decoder::init(cfg.decoder, d, cfg.audio_patch_dim, PositionalLayout({cfg.audio_grids[0]}), rng);

    const auto teacher_v = copy_backbone(*m.student_video.backbone);
    const auto teacher_a = variant == Variant::MATS ? teacher_v : copy_backbone(*m.student_audio.backbone);
    m.teacher_video = copy_as_teacher(m.student_video, teacher_v);
    m.teacher_audio = copy_as_teacher(m.student_audio, teacher_a);
    return m;
}

std::vector<EmaPair> ema_pairs(const ModelSet& m, double lambda_video, double lambda_audio) {
    std::vector<EmaPair> out;
    std::unordered_set<const detail::Node*> seen;
    const std::pair<const Network*, const Network*> nets[] = {{&m.teacher_video, &m.student_video},
                                                              {&m.teacher_audio, &m.student_audio}};
    const double lambdas[] = {lambda_video, lambda_audio};
    for (int i = 0; i < 2; ++i) {
        const auto& [teacher, student] = nets[i];
        NamedParams t, s;
        collect_network(*teacher, "net", "m", false, t);
        collect_network(*student, "net", "m", false, s);
        zip_pairs(t, s, lambdas[i], out, seen);
    }
    return out;
}

}  // namespace xkd
