// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <vector>

#include "xkd/views/clip.hpp"
#include "xkd/views/tokens.hpp"

namespace xkd {

/// Paired clip generator.
///
/// Video: a Gaussian blob drifting along a class-specific direction over a
/// fixed vertical brightness ramp. Blob speed follows a per-seed sinusoid z_t in
/// [-1, 1]: speed_t = kBaseSpeed * (1 + z_t / 2).
///
/// Audio: a class-indexed Gaussian frequency band scaled by the envelope
///   env_u = 1/2 + (rho * z_{t(u)} + sqrt(1 - rho^2) * w_u) / 4,
/// where t(u) is the video frame covering audio frame u and w_u ~ N(0, 1/2),
/// the variance of z under a uniform phase, so Corr(env, speed) = rho.
/// With rho = 1 this is env_u = speed_{t(u)} / (2 kBaseSpeed) exactly.
/// A constant harmonic comb on the even bins sits under the band.
///
/// Gaussian noise of std noise_std is added to both modalities.
struct GeneratorSpec {
    std::uint32_t n_classes = 4;
    std::size_t video_frames = 8, height = 16, width = 16, channels = 1;
    std::size_t audio_freq = 16, audio_time = 32;
    double cross_modal_strength = 0.9;
    double noise_std = 0.1;

    static constexpr double kBaseSpeed = 1.0;  // pixels per frame
    static constexpr double kBlobSigma = 4.0;  // pixels
    static constexpr double kBandSigma = 0.7;  // frequency bins
    static constexpr double kBlobAmplitude = 0.3;
    static constexpr double kRampTop = 0.7;  // background at the bottom row, 0 at the top
    static constexpr double kBandAmplitude = 2.0;
    static constexpr double kCombLevel = 0.4;  // even bins only

    /// rho clamped to [0, 1].
    double rho() const;
    /// Geometry must tile exactly into the given patches.
    void validate(const VideoPatch& vp = {}, const AudioPatch& ap = {}) const;

    bool operator==(const GeneratorSpec&) const = default;
};

/// The hidden variables behind one clip.
struct ClipLatents {
    std::vector<double> speed;     // per video frame
    std::vector<double> envelope;  // per audio frame
    double direction = 0.0;        // radians
    std::size_t band = 0;          // centre frequency bin
};

/// Centre bin of each class's band.
std::size_t class_band(const GeneratorSpec& spec, std::uint32_t class_id);

ClipPair generate_clip(const GeneratorSpec& spec, std::uint32_t class_id, std::uint64_t seed,
                       ClipLatents* latents = nullptr);

/// n_per_class clips for every class, interleaved by class. Clip seeds are
/// drawn from the "data" stream of `root_seed`.
std::vector<ClipPair> generate_dataset(const GeneratorSpec& spec, std::size_t n_per_class, std::uint64_t root_seed);

struct Dataset {
    GeneratorSpec spec;
    std::vector<ClipPair> clips;
};

void write_dataset(const std::filesystem::path& path, const GeneratorSpec& spec, const std::vector<ClipPair>& clips);
Dataset read_dataset(const std::filesystem::path& path);

/// Streams clips from a dataset file one at a time.
class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& path);

    const GeneratorSpec& spec() const { return spec_; }
    std::uint64_t size() const { return count_; }
    /// nullopt after the last clip.
    std::optional<ClipPair> next();

private:
    std::ifstream in_;
    GeneratorSpec spec_;
    std::uint64_t count_ = 0, read_ = 0;
};

}  // namespace xkd
