// SPDX-License-Identifier: Apache-2.0
#include "xkd/synthdata/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xkd/core/binary_io.hpp"
#include "xkd/core/error.hpp"
#include "xkd/core/rng.hpp"

namespace xkd {

namespace {

constexpr char kMagic[4] = {'X', 'K', 'D', 'D'};
constexpr std::uint32_t kVersion = 1;

double ramp(std::size_t y, std::size_t height) {
    return height > 1 ? GeneratorSpec::kRampTop * static_cast<double>(y) / static_cast<double>(height - 1) : 0.0;
}

double comb(std::size_t f) { return f % 2 == 0 ? GeneratorSpec::kCombLevel : 0.0; }

void write_spec(BinaryWriter& w, const GeneratorSpec& s) {
    w.u32(s.n_classes);
    for (std::size_t v : {s.video_frames, s.height, s.width, s.channels, s.audio_freq, s.audio_time}) w.u64(v);
    w.f64(s.cross_modal_strength);
    w.f64(s.noise_std);
}

GeneratorSpec read_spec(BinaryReader& r) {
    GeneratorSpec s;
    s.n_classes = r.u32("generator spec");
    for (std::size_t* v : {&s.video_frames, &s.height, &s.width, &s.channels, &s.audio_freq, &s.audio_time})
        *v = r.u64("generator spec");
    s.cross_modal_strength = r.f64("generator spec");
    s.noise_std = r.f64("generator spec");
    if (s.n_classes < 2 || s.video_frames * s.height * s.width * s.channels == 0 || s.audio_freq * s.audio_time == 0)
        throw FormatError("corrupt dataset header: invalid generator spec");
    return s;
}

void read_header(BinaryReader& r, GeneratorSpec& spec, std::uint64_t& count) {
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a dataset file: bad magic");
    if (const auto v = r.u32("version"); v != kVersion)
        throw FormatError("unsupported dataset version " + std::to_string(v));
    spec = read_spec(r);
    count = r.u64("clip count");
}

ClipPair read_clip(BinaryReader& r, const GeneratorSpec& spec) {
    ClipPair c;
    c.label = r.u32("clip label");
    if (c.label >= spec.n_classes) throw FormatError("corrupt clip: label out of range");
    c.seed = r.u64("clip seed");
    c.video = Video(spec.video_frames, spec.height, spec.width, spec.channels);
    c.video.data = r.f64s(c.video.data.size(), "video payload");
    c.audio = Spectrogram(spec.audio_freq, spec.audio_time);
    c.audio.data = r.f64s(c.audio.data.size(), "audio payload");
    return c;
}

}  // namespace

double GeneratorSpec::rho() const { return std::clamp(cross_modal_strength, 0.0, 1.0); }

void GeneratorSpec::validate(const VideoPatch& vp, const AudioPatch& ap) const {
    require(n_classes >= 2, "GeneratorSpec: at least two classes are required");
    require(channels >= 1, "GeneratorSpec: channels must be positive");
    require(video_frames > 0 && video_frames % vp.time == 0 && height > 0 && height % vp.height == 0 && width > 0 &&
                width % vp.width == 0,
            "GeneratorSpec: video geometry does not tile into patches");
    require(audio_freq > 0 && audio_freq % ap.freq == 0 && audio_time > 0 && audio_time % ap.time == 0,
            "GeneratorSpec: audio geometry does not tile into patches");
    require(noise_std >= 0.0, "GeneratorSpec: noise_std must be non-negative");
}

std::size_t class_band(const GeneratorSpec& spec, std::uint32_t class_id) {
    return static_cast<std::size_t>((class_id + 0.5) * static_cast<double>(spec.audio_freq) / spec.n_classes);
}

ClipPair generate_clip(const GeneratorSpec& spec, std::uint32_t class_id, std::uint64_t seed, ClipLatents* latents) {
    require(class_id < spec.n_classes, "generate_clip: class id " + std::to_string(class_id) + " out of range");
    require(spec.video_frames > 0 && spec.audio_time > 0 && spec.audio_freq > 0, "generate_clip: empty geometry");
    Rng rng = Rng::stream(seed, "clip", class_id);
    const double rho = spec.rho();
    const double pi = std::numbers::pi;

    ClipLatents lat;
    lat.direction = 2.0 * pi * class_id / spec.n_classes + rng.uniform(-0.15, 0.15);
    const double omega = rng.uniform(0.4, 1.2);
    const double phase = rng.uniform(0.0, 2.0 * pi);
    const double jitter_x = rng.uniform(-1.5, 1.5);
    const double jitter_y = rng.uniform(-1.5, 1.5);

    std::vector<double> z(spec.video_frames);
    lat.speed.resize(spec.video_frames);
    for (std::size_t t = 0; t < spec.video_frames; ++t) {
        z[t] = std::sin(omega * static_cast<double>(t) + phase);
        lat.speed[t] = GeneratorSpec::kBaseSpeed * (1.0 + 0.5 * z[t]);
    }
    lat.envelope.resize(spec.audio_time);
    const double nuisance = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t u = 0; u < spec.audio_time; ++u) {
        const std::size_t t = u * spec.video_frames / spec.audio_time;
        const double w = rng.normal() / std::numbers::sqrt2;
        lat.envelope[u] = 0.5 + 0.25 * (rho * z[t] + nuisance * w);
    }
    lat.band = class_band(spec, class_id);

    ClipPair clip;
    clip.label = class_id;
    clip.seed = seed;
    clip.video = Video(spec.video_frames, spec.height, spec.width, spec.channels);
    const double dx = std::cos(lat.direction), dy = std::sin(lat.direction);
    double travel = 0.0;
    for (double s : lat.speed) travel += s;
    double px = 0.5 * static_cast<double>(spec.width - 1) - 0.5 * travel * dx + jitter_x;
    double py = 0.5 * static_cast<double>(spec.height - 1) - 0.5 * travel * dy + jitter_y;
    const double inv2s2 = 1.0 / (2.0 * GeneratorSpec::kBlobSigma * GeneratorSpec::kBlobSigma);
    for (std::size_t t = 0; t < spec.video_frames; ++t) {
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double ex = static_cast<double>(x) - px, ey = static_cast<double>(y) - py;
                const double v = ramp(y, spec.height) + GeneratorSpec::kBlobAmplitude * std::exp(-(ex * ex + ey * ey) * inv2s2);
                for (std::size_t c = 0; c < spec.channels; ++c) clip.video.at(t, y, x, c) = v;
            }
        px += lat.speed[t] * dx;
        py += lat.speed[t] * dy;
    }

    clip.audio = Spectrogram(spec.audio_freq, spec.audio_time);
    const double inv2b2 = 1.0 / (2.0 * GeneratorSpec::kBandSigma * GeneratorSpec::kBandSigma);
    for (std::size_t f = 0; f < spec.audio_freq; ++f) {
        const double d = static_cast<double>(f) - static_cast<double>(lat.band);
        const double band = GeneratorSpec::kBandAmplitude * std::exp(-d * d * inv2b2);
        for (std::size_t u = 0; u < spec.audio_time; ++u) clip.audio.at(f, u) = lat.envelope[u] * band + comb(f);
    }

    // Noise is drawn even when its std is zero so the stream layout is fixed.
    for (double& v : clip.video.data) v += spec.noise_std * rng.normal();
    for (double& v : clip.audio.data) v += spec.noise_std * rng.normal();

    if (latents) *latents = std::move(lat);
    return clip;
}

std::vector<ClipPair> generate_dataset(const GeneratorSpec& spec, std::size_t n_per_class, std::uint64_t root_seed) {
    Rng seeds = Rng::stream(root_seed, "data");
    std::vector<ClipPair> clips;
    clips.reserve(n_per_class * spec.n_classes);
    for (std::size_t i = 0; i < n_per_class; ++i)
        for (std::uint32_t c = 0; c < spec.n_classes; ++c) clips.push_back(generate_clip(spec, c, seeds.next_u64()));
    return clips;
}

void write_dataset(const std::filesystem::path& path, const GeneratorSpec& spec, const std::vector<ClipPair>& clips) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    BinaryWriter w(out);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    write_spec(w, spec);
    w.u64(clips.size());
    for (const auto& c : clips) {
        require(c.video.frames == spec.video_frames && c.video.height == spec.height && c.video.width == spec.width &&
                    c.video.channels == spec.channels && c.audio.freq == spec.audio_freq &&
                    c.audio.time == spec.audio_time,
                "write_dataset: clip geometry differs from the spec");
        w.u32(c.label);
        w.u64(c.seed);
        w.f64s(c.video.data);
        w.f64s(c.audio.data);
    }
}

Dataset read_dataset(const std::filesystem::path& path) {
    DatasetReader reader(path);
    Dataset d;
    d.spec = reader.spec();
    while (auto clip = reader.next()) d.clips.push_back(std::move(*clip));
    return d;
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open dataset " + path.string());
    BinaryReader r(in_);
    read_header(r, spec_, count_);
}

std::optional<ClipPair> DatasetReader::next() {
    if (read_ == count_) return std::nullopt;
    BinaryReader r(in_);
    ClipPair c = read_clip(r, spec_);
    ++read_;
    return c;
}

}  // namespace xkd
