// SPDX-License-Identifier: Apache-2.0
#include "xkd/trainer/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "xkd/core/binary_io.hpp"
#include "xkd/core/error.hpp"

namespace xkd {

namespace {

constexpr char kMagic[4] = {'X', 'K', 'D', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

Blob vector_blob(std::string name, std::vector<double> values) {
    Shape shape{values.size()};
    return {std::move(name), std::move(shape), std::move(values)};
}

Blob scalar_blob(std::string name, double value) { return {std::move(name), {1}, {value}}; }

void write_table(BinaryWriter& w, const std::vector<Blob>& blobs) {
    w.u64(blobs.size());
    for (const auto& b : blobs) {
        require(shape_numel(b.shape) == b.values.size(), "checkpoint: blob " + b.name + " has inconsistent shape");
        w.str(b.name);
        w.u32(static_cast<std::uint32_t>(b.shape.size()));
        for (std::size_t e : b.shape) w.u64(e);
        w.f64s(b.values);
    }
}

std::vector<Blob> read_table(BinaryReader& r, const char* what) {
    const std::uint64_t n = r.u64(what);
    std::vector<Blob> blobs;
    for (std::uint64_t i = 0; i < n; ++i) {
        Blob b;
        b.name = r.str("blob name");
        const std::uint32_t rank = r.u32("blob rank");
        if (rank > kMaxRank) throw FormatError("checkpoint: implausible rank for blob " + b.name);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            b.shape.push_back(r.u64("blob extent"));
            numel *= b.shape.back();
        }
        b.values = r.f64s(numel, "blob payload");
        blobs.push_back(std::move(b));
    }
    return blobs;
}

const Blob& need(const Checkpoint& c, const std::string& name) {
    const Blob* b = c.find_meta(name);
    if (!b) throw FormatError("checkpoint: missing metadata " + name);
    return *b;
}

}  // namespace

const Blob* Checkpoint::find_meta(const std::string& name) const {
    const auto it = std::find_if(meta.begin(), meta.end(), [&](const Blob& b) { return b.name == name; });
    return it == meta.end() ? nullptr : &*it;
}

Checkpoint make_checkpoint(const ModelSet& models, const TrainState& state) {
    Checkpoint c;
    for (const auto& [name, t] : models.named_parameters()) {
        const auto v = t.values();
        c.params.push_back({name, t.shape(), std::vector<double>(v.begin(), v.end())});
    }
    const NamedParams trainable = models.trainable_parameters();
    require(trainable.size() == state.optimizer.first_moment.size(),
            "make_checkpoint: optimizer state does not match the trainable parameters");
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        const Shape& shape = trainable[i].second.shape();
        c.meta.push_back({"opt.m." + trainable[i].first, shape, state.optimizer.first_moment[i]});
        c.meta.push_back({"opt.v." + trainable[i].first, shape, state.optimizer.second_moment[i]});
    }
    c.meta.push_back(scalar_blob("opt.step", static_cast<double>(state.optimizer.step_count)));
    c.meta.push_back(vector_blob("center.video", state.center_video.center));
    c.meta.push_back(vector_blob("center.audio", state.center_audio.center));
    c.meta.push_back(scalar_blob("train.step", static_cast<double>(state.step)));
    c.meta.push_back(scalar_blob("model.variant", static_cast<double>(models.variant)));
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    BinaryWriter w(out);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    write_table(w, ckpt.params);
    write_table(w, ckpt.meta);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    BinaryReader r(in);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a checkpoint file: bad magic");
    if (const auto v = r.u32("version"); v != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(v));
    Checkpoint c;
    c.params = read_table(r, "parameter table");
    c.meta = read_table(r, "metadata table");
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after metadata");
    return c;
}

void apply_checkpoint(const Checkpoint& ckpt, ModelSet& models, TrainState& state) {
    const auto variant = static_cast<int>(need(ckpt, "model.variant").values.at(0));
    if (variant != static_cast<int>(models.variant))
        throw FormatError("checkpoint: variant " + to_string(static_cast<Variant>(variant)) +
                          " does not match the model (" + to_string(models.variant) + ")");
    const NamedParams named = models.named_parameters();
    if (named.size() != ckpt.params.size())
        throw FormatError("checkpoint: " + std::to_string(ckpt.params.size()) + " parameter blobs, model has " +
                          std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        const Blob& b = ckpt.params[i];
        if (b.name != named[i].first || b.shape != named[i].second.shape())
            throw FormatError("checkpoint: blob " + b.name + " " + shape_string(b.shape) + " does not match " +
                              named[i].first + " " + shape_string(named[i].second.shape()));
    }
    const NamedParams trainable = models.trainable_parameters();
    std::vector<std::vector<double>> m, v;
    for (const auto& [name, t] : trainable) {
        const Blob& bm = need(ckpt, "opt.m." + name);
        const Blob& bv = need(ckpt, "opt.v." + name);
        if (bm.values.size() != t.numel() || bv.values.size() != t.numel())
            throw FormatError("checkpoint: optimizer moments for " + name + " have the wrong size");
        m.push_back(bm.values);
        v.push_back(bv.values);
    }

    for (std::size_t i = 0; i < named.size(); ++i) {
        Tensor t = named[i].second;
        auto dst = t.mutable_values();
        std::copy(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), dst.begin());
    }
    state.optimizer.first_moment = std::move(m);
    state.optimizer.second_moment = std::move(v);
    state.optimizer.step_count = static_cast<std::uint64_t>(need(ckpt, "opt.step").values.at(0));
    state.center_video.center = need(ckpt, "center.video").values;
    state.center_audio.center = need(ckpt, "center.audio").values;
    state.step = static_cast<std::uint64_t>(need(ckpt, "train.step").values.at(0));
}

void save_checkpoint(const std::filesystem::path& path, const ModelSet& models, const TrainState& state) {
    write_checkpoint(path, make_checkpoint(models, state));
}

void load_checkpoint(const std::filesystem::path& path, ModelSet& models, TrainState& state) {
    apply_checkpoint(read_checkpoint(path), models, state);
}

}  // namespace xkd
