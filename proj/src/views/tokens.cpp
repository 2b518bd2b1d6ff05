// SPDX-License-Identifier: Apache-2.0
#include "xkd/views/tokens.hpp"

#include <algorithm>
#include <cmath>

#include "xkd/core/error.hpp"

namespace xkd {

namespace {

void require_divisible(std::size_t extent, std::size_t patch, const char* what) {
    require(patch >= 1 && extent >= patch && extent % patch == 0,
            std::string("patchify: ") + what + " extent " + std::to_string(extent) + " is not divisible by patch extent " +
                std::to_string(patch));
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

std::size_t grid_count(const Grid& grid) {
    std::size_t n = 1;
    for (auto g : grid) n *= g;
    return n;
}

std::vector<std::size_t> TokenBatch::masked_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(i);
    return out;
}

TokenBatch patchify(const Video& v, const VideoPatch& p) {
    require_divisible(v.frames, p.time, "time");
    require_divisible(v.height, p.height, "height");
    require_divisible(v.width, p.width, "width");
    const Grid grid{v.frames / p.time, v.height / p.height, v.width / p.width};
    const std::size_t n = grid_count(grid), d = p.time * p.height * p.width * v.channels;
    std::vector<double> out(n * d);
    std::size_t row = 0;
    for (std::size_t gt = 0; gt < grid[0]; ++gt)
        for (std::size_t gy = 0; gy < grid[1]; ++gy)
            for (std::size_t gx = 0; gx < grid[2]; ++gx, ++row) {
                double* dst = out.data() + row * d;
                for (std::size_t dt = 0; dt < p.time; ++dt)
                    for (std::size_t dy = 0; dy < p.height; ++dy)
                        for (std::size_t dx = 0; dx < p.width; ++dx)
                            for (std::size_t c = 0; c < v.channels; ++c)
                                *dst++ = v.at(gt * p.time + dt, gy * p.height + dy, gx * p.width + dx, c);
            }
    TokenBatch b;
    b.modality = Modality::Video;
    b.tokens = Tensor({n, d}, std::move(out));
    b.grid = grid;
    b.mask.assign(n, false);
    b.kept_indices = iota(n);
    return b;
}

TokenBatch patchify(const Spectrogram& s, const AudioPatch& p) {
    require_divisible(s.freq, p.freq, "frequency");
    require_divisible(s.time, p.time, "time");
    const Grid grid{s.freq / p.freq, s.time / p.time};
    const std::size_t n = grid_count(grid), d = p.freq * p.time;
    std::vector<double> out(n * d);
    std::size_t row = 0;
    for (std::size_t gf = 0; gf < grid[0]; ++gf)
        for (std::size_t gt = 0; gt < grid[1]; ++gt, ++row) {
            double* dst = out.data() + row * d;
            for (std::size_t df = 0; df < p.freq; ++df)
                for (std::size_t dt = 0; dt < p.time; ++dt) *dst++ = s.at(gf * p.freq + df, gt * p.time + dt);
        }
    TokenBatch b;
    b.modality = Modality::Audio;
    b.tokens = Tensor({n, d}, std::move(out));
    b.grid = grid;
    b.mask.assign(n, false);
    b.kept_indices = iota(n);
    return b;
}

Video unpatchify_video(std::span<const double> tokens, const Grid& grid, const VideoPatch& p, std::size_t channels) {
    require(grid.size() == 3, "unpatchify_video: grid must have 3 extents");
    const std::size_t d = p.time * p.height * p.width * channels;
    require(tokens.size() == grid_count(grid) * d, "unpatchify_video: token buffer does not match the grid");
    Video v(grid[0] * p.time, grid[1] * p.height, grid[2] * p.width, channels);
    const double* src = tokens.data();
    for (std::size_t gt = 0; gt < grid[0]; ++gt)
        for (std::size_t gy = 0; gy < grid[1]; ++gy)
            for (std::size_t gx = 0; gx < grid[2]; ++gx)
                for (std::size_t dt = 0; dt < p.time; ++dt)
                    for (std::size_t dy = 0; dy < p.height; ++dy)
                        for (std::size_t dx = 0; dx < p.width; ++dx)
                            for (std::size_t c = 0; c < channels; ++c)
                                v.at(gt * p.time + dt, gy * p.height + dy, gx * p.width + dx, c) = *src++;
    return v;
}

Spectrogram unpatchify_audio(std::span<const double> tokens, const Grid& grid, const AudioPatch& p) {
    require(grid.size() == 2, "unpatchify_audio: grid must have 2 extents");
    require(tokens.size() == grid_count(grid) * p.freq * p.time, "unpatchify_audio: token buffer does not match the grid");
    Spectrogram s(grid[0] * p.freq, grid[1] * p.time);
    const double* src = tokens.data();
    for (std::size_t gf = 0; gf < grid[0]; ++gf)
        for (std::size_t gt = 0; gt < grid[1]; ++gt)
            for (std::size_t df = 0; df < p.freq; ++df)
                for (std::size_t dt = 0; dt < p.time; ++dt) s.at(gf * p.freq + df, gt * p.time + dt) = *src++;
    return s;
}

TokenBatch mask_tokens(TokenBatch batch, double ratio, Rng& rng) {
    require(ratio >= 0.0 && ratio < 1.0, "mask_tokens: ratio must lie in [0, 1)");
    const std::size_t n = batch.count();
    // Products within 1e-9 below an integer count as that integer.
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
    batch.mask.assign(n, false);
    for (auto i : rng.sample_without_replacement(n, k)) batch.mask[i] = true;
    batch.kept_indices.clear();
    for (std::size_t i = 0; i < n; ++i)
        if (!batch.mask[i]) batch.kept_indices.push_back(i);
    return batch;
}

}  // namespace xkd
