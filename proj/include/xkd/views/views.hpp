// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "xkd/core/rng.hpp"
#include "xkd/views/clip.hpp"

namespace xkd {

struct VideoAugment {
    double crop_scale_lo = 0.2;  // area fraction of the multi-scale crop
    double crop_scale_hi = 1.0;
    double flip_p = 0.5;
    double brightness = 0.4;  // factor drawn from [1 - b, 1 + b]
    double contrast = 0.4;
    double grayscale_p = 0.0;
    double blur_p = 0.0;  // fixed 3x3 binomial kernel

    static VideoAugment global_default();
    static VideoAugment local_default();
    /// No flips, jitter, grayscale or blur; crop scale [1, 1].
    static VideoAugment identity();
};

struct AudioAugment {
    double volume = 0.1;  // gain drawn from [1 - v, 1 + v]
    double crop_range_lo = 0.6;  // local crop length as a multiple of the local length
    double crop_range_hi = 1.5;

    static AudioAugment global_default();
    static AudioAugment local_default();
    static AudioAugment identity();
};

/// Geometry and augmentation parameters for global/local views.
///
/// Global views keep the source extents. Local views take `local_seconds`
/// out of the clip; their frame counts follow from the clip's frame rates.
struct ViewConfig {
    double video_fps = 2.0;
    double audio_frame_rate = 8.0;
    double local_seconds = 2.0;
    std::size_t local_video_height = 16;
    std::size_t local_video_width = 16;
    std::size_t n_local = 1;

    VideoAugment global_video = VideoAugment::global_default();
    VideoAugment local_video = VideoAugment::local_default();
    AudioAugment global_audio = AudioAugment::global_default();
    AudioAugment local_audio = AudioAugment::local_default();

    std::size_t local_video_frames() const;
    std::size_t local_audio_frames() const;

    /// 8 fps video, 16 kHz audio at 112 spectrogram frames per second, 1 s locals of 96^2.
    static ViewConfig paper_scale();
};

struct ViewSet {
    Video global_video;
    Spectrogram global_audio;
    std::vector<Video> local_videos;
    std::vector<Spectrogram> local_audios;
};

/// Draws every random decision from `rng`, in a fixed order.
ViewSet make_views(const ClipPair& clip, const ViewConfig& cfg, Rng& rng);

// Building blocks, exposed for tests and the reconstruction tool.

/// Bilinear resize of every frame (half-pixel centers). Same size is the identity.
Video resize_frames(const Video& v, std::size_t height, std::size_t width);
/// Linear resampling along time. Same length is the identity.
Spectrogram resize_time(const Spectrogram& s, std::size_t time);
/// 3x3 binomial blur per frame and channel, edges clamped.
Video blur3x3(const Video& v);

}  // namespace xkd
