// SPDX-License-Identifier: Apache-2.0
#include "xkd/views/views.hpp"

#include <algorithm>
#include <cmath>

#include "xkd/core/error.hpp"

namespace xkd {

std::string to_string(Modality m) { return m == Modality::Video ? "video" : "audio"; }

VideoAugment VideoAugment::global_default() { return {}; }

VideoAugment VideoAugment::local_default() {
    VideoAugment a;
    a.crop_scale_lo = 0.08;
    a.crop_scale_hi = 0.4;
    a.grayscale_p = 0.2;
    a.blur_p = 0.5;
    return a;
}

VideoAugment VideoAugment::identity() {
    VideoAugment a;
    a.crop_scale_lo = 1.0;
    a.crop_scale_hi = 1.0;
    a.flip_p = 0.0;
    a.brightness = 0.0;
    a.contrast = 0.0;
    return a;
}

AudioAugment AudioAugment::global_default() { return {}; }

AudioAugment AudioAugment::local_default() {
    AudioAugment a;
    a.volume = 0.2;
    return a;
}

AudioAugment AudioAugment::identity() {
    AudioAugment a;
    a.volume = 0.0;
    return a;
}

std::size_t ViewConfig::local_video_frames() const {
    return static_cast<std::size_t>(std::lround(local_seconds * video_fps));
}

std::size_t ViewConfig::local_audio_frames() const {
    return static_cast<std::size_t>(std::lround(local_seconds * audio_frame_rate));
}

ViewConfig ViewConfig::paper_scale() {
    ViewConfig c;
    c.video_fps = 8.0;
    c.audio_frame_rate = 112.0;
    c.local_seconds = 1.0;
    c.local_video_height = 96;
    c.local_video_width = 96;
    return c;
}

namespace {

struct Rect {
    std::size_t y0, x0, h, w;
};

// Up to 10 attempts at an area/aspect sample, then the full frame.
Rect sample_crop(std::size_t height, std::size_t width, double scale_lo, double scale_hi, Rng& rng) {
    const double area = static_cast<double>(height * width);
    const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(scale_lo, scale_hi);
        const double aspect = std::exp(rng.uniform(log_lo, log_hi));
        const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
        const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
        if (w >= 1 && h >= 1 && w <= width && h <= height) {
            const std::size_t y0 = rng.below(height - h + 1);
            const std::size_t x0 = rng.below(width - w + 1);
            return {y0, x0, h, w};
        }
    }
    return {0, 0, height, width};
}

Video crop(const Video& v, std::size_t t0, std::size_t frames, const Rect& r) {
    Video out(frames, r.h, r.w, v.channels);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t y = 0; y < r.h; ++y)
            for (std::size_t x = 0; x < r.w; ++x)
                for (std::size_t c = 0; c < v.channels; ++c) out.at(t, y, x, c) = v.at(t0 + t, r.y0 + y, r.x0 + x, c);
    return out;
}

void flip_horizontal(Video& v) {
    for (std::size_t t = 0; t < v.frames; ++t)
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width / 2; ++x)
                for (std::size_t c = 0; c < v.channels; ++c) std::swap(v.at(t, y, x, c), v.at(t, y, v.width - 1 - x, c));
}

void to_grayscale(Video& v) {
    if (v.channels < 2) return;
    const std::size_t pixels = v.frames * v.height * v.width;
    for (std::size_t p = 0; p < pixels; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < v.channels; ++c) s += v.data[p * v.channels + c];
        s /= static_cast<double>(v.channels);
        for (std::size_t c = 0; c < v.channels; ++c) v.data[p * v.channels + c] = s;
    }
}

// Every uniform is drawn regardless of the configured strengths, so rng
// consumption depends only on the view geometry and crop retries.
Video augment_video(const Video& src, std::size_t t0, std::size_t frames, std::size_t out_h, std::size_t out_w,
                    const VideoAugment& aug, Rng& rng) {
    const Rect r = sample_crop(src.height, src.width, aug.crop_scale_lo, aug.crop_scale_hi, rng);
    Video v = resize_frames(crop(src, t0, frames, r), out_h, out_w);

    const bool flip = rng.bernoulli(aug.flip_p);
    const double bright = rng.uniform(1.0 - aug.brightness, 1.0 + aug.brightness);
    const double contrast = rng.uniform(1.0 - aug.contrast, 1.0 + aug.contrast);
    const bool gray = rng.bernoulli(aug.grayscale_p);
    const bool blur = rng.bernoulli(aug.blur_p);

    if (flip) flip_horizontal(v);
    if (aug.brightness > 0.0)
        for (auto& x : v.data) x *= bright;
    if (aug.contrast > 0.0) {
        double mean = 0.0;
        for (double x : v.data) mean += x;
        mean /= static_cast<double>(v.data.size());
        for (auto& x : v.data) x = (x - mean) * contrast + mean;
    }
    if (gray) to_grayscale(v);
    if (blur) v = blur3x3(v);
    if (aug.brightness > 0.0 || aug.contrast > 0.0)
        for (auto& x : v.data) x = std::clamp(x, 0.0, 1.0);
    return v;
}

// Locals take a time crop of the source stretched to `out_time`; frequency is untouched.
Spectrogram augment_audio(const Spectrogram& src, std::size_t out_time, bool local, const AudioAugment& aug, Rng& rng) {
    Spectrogram s = src;
    if (local) {
        const double r = rng.uniform(aug.crop_range_lo, aug.crop_range_hi);
        auto len = static_cast<std::size_t>(std::lround(static_cast<double>(out_time) * r));
        len = std::clamp<std::size_t>(len, 1, src.time);
        const std::size_t t0 = rng.below(src.time - len + 1);
        Spectrogram c(src.freq, len);
        for (std::size_t f = 0; f < src.freq; ++f)
            for (std::size_t t = 0; t < len; ++t) c.at(f, t) = src.at(f, t0 + t);
        s = resize_time(c, out_time);
    }
    const double gain = rng.uniform(1.0 - aug.volume, 1.0 + aug.volume);
    if (aug.volume > 0.0)
        for (auto& x : s.data) x *= gain;
    return s;
}

}  // namespace

Video resize_frames(const Video& v, std::size_t height, std::size_t width) {
    require(height >= 1 && width >= 1, "resize_frames: empty target size");
    if (height == v.height && width == v.width) return v;
    Video out(v.frames, height, width, v.channels);
    auto coord = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& lo, std::size_t& hi, double& frac) {
        double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        lo = static_cast<std::size_t>(std::floor(s));
        hi = std::min(lo + 1, in - 1);
        frac = s - static_cast<double>(lo);
    };
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t y0, y1;
        double fy;
        coord(y, v.height, height, y0, y1, fy);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t x0, x1;
            double fx;
            coord(x, v.width, width, x0, x1, fx);
            for (std::size_t t = 0; t < v.frames; ++t)
                for (std::size_t c = 0; c < v.channels; ++c) {
                    const double top = v.at(t, y0, x0, c) * (1.0 - fx) + v.at(t, y0, x1, c) * fx;
                    const double bot = v.at(t, y1, x0, c) * (1.0 - fx) + v.at(t, y1, x1, c) * fx;
                    out.at(t, y, x, c) = top * (1.0 - fy) + bot * fy;
                }
        }
    }
    return out;
}

Spectrogram resize_time(const Spectrogram& s, std::size_t time) {
    require(time >= 1, "resize_time: empty target length");
    if (time == s.time) return s;
    Spectrogram out(s.freq, time);
    for (std::size_t t = 0; t < time; ++t) {
        double src = time == 1 ? 0.0 : static_cast<double>(t) * static_cast<double>(s.time - 1) / static_cast<double>(time - 1);
        const auto lo = static_cast<std::size_t>(std::floor(src));
        const std::size_t hi = std::min(lo + 1, s.time - 1);
        const double frac = src - static_cast<double>(lo);
        for (std::size_t f = 0; f < s.freq; ++f) out.at(f, t) = s.at(f, lo) * (1.0 - frac) + s.at(f, hi) * frac;
    }
    return out;
}

Video blur3x3(const Video& v) {
    static constexpr double k[3] = {0.25, 0.5, 0.25};
    Video out(v.frames, v.height, v.width, v.channels);
    auto clampi = [](long i, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1)); };
    for (std::size_t t = 0; t < v.frames; ++t)
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width; ++x)
                for (std::size_t c = 0; c < v.channels; ++c) {
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                            acc += k[dy + 1] * k[dx + 1] *
                                   v.at(t, clampi(static_cast<long>(y) + dy, v.height), clampi(static_cast<long>(x) + dx, v.width), c);
                    out.at(t, y, x, c) = acc;
                }
    return out;
}

ViewSet make_views(const ClipPair& clip, const ViewConfig& cfg, Rng& rng) {
    const Video& src = clip.video;
    const std::size_t lv = cfg.local_video_frames();
    const std::size_t la = cfg.local_audio_frames();
    require(src.frames >= 1 && src.height >= 1 && src.width >= 1, "make_views: empty video");
    require(clip.audio.time >= 1 && clip.audio.freq >= 1, "make_views: empty spectrogram");
    require(lv >= 1 && lv <= src.frames, "make_views: local video crop of " + std::to_string(lv) +
                                             " frames exceeds the source's " + std::to_string(src.frames));
    require(cfg.local_video_height <= src.height && cfg.local_video_width <= src.width,
            "make_views: local video size exceeds the source frame");
    require(la >= 1 && la <= clip.audio.time, "make_views: local audio crop of " + std::to_string(la) +
                                                  " frames exceeds the source's " + std::to_string(clip.audio.time));
    require(cfg.n_local >= 1, "make_views: at least one local view is required");

    ViewSet out;
    out.global_video = augment_video(src, 0, src.frames, src.height, src.width, cfg.global_video, rng);
    out.global_audio = augment_audio(clip.audio, clip.audio.time, false, cfg.global_audio, rng);
    for (std::size_t i = 0; i < cfg.n_local; ++i) {
        const std::size_t t0 = rng.below(src.frames - lv + 1);
        out.local_videos.push_back(
            augment_video(src, t0, lv, cfg.local_video_height, cfg.local_video_width, cfg.local_video, rng));
        out.local_audios.push_back(augment_audio(clip.audio, la, true, cfg.local_audio, rng));
    }
    return out;
}

}  // namespace xkd
