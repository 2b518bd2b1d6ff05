// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace xkd {

enum class Modality { Video, Audio };

std::string to_string(Modality m);

/// Frames x height x width x channels, row-major, values in [0, 1].
struct Video {
    std::size_t frames = 0, height = 0, width = 0, channels = 0;
    std::vector<double> data;

    Video() = default;
    Video(std::size_t t, std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : frames(t), height(h), width(w), channels(c), data(t * h * w * c, fill) {}

    std::size_t index(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return ((t * height + y) * width + x) * channels + c;
    }
    double& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) { return data[index(t, y, x, c)]; }
    double at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const { return data[index(t, y, x, c)]; }

    bool operator==(const Video&) const = default;
};

/// Frequency x time, row-major.
struct Spectrogram {
    std::size_t freq = 0, time = 0;
    std::vector<double> data;

    Spectrogram() = default;
    Spectrogram(std::size_t f, std::size_t t, double fill = 0.0) : freq(f), time(t), data(f * t, fill) {}

    double& at(std::size_t f, std::size_t t) { return data[f * time + t]; }
    double at(std::size_t f, std::size_t t) const { return data[f * time + t]; }

    bool operator==(const Spectrogram&) const = default;
};

/// One paired audio-video sample.
struct ClipPair {
    Video video;
    Spectrogram audio;
    std::uint32_t label = 0;
    std::uint64_t seed = 0;

    bool operator==(const ClipPair&) const = default;
};

}  // namespace xkd
