// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "xkd/autograd/tensor.hpp"
#include "xkd/core/rng.hpp"
#include "xkd/views/clip.hpp"

namespace xkd {

struct VideoPatch {
    std::size_t time = 2, height = 8, width = 8;
};

struct AudioPatch {
    std::size_t freq = 4, time = 8;
};

using Grid = std::vector<std::size_t>;

struct TokenBatch {
    Modality modality = Modality::Video;
    Tensor tokens;  // N x D_patch, no gradient
    Grid grid;      // video: (T/t, H/h, W/w); audio: (F/f, T/t)
    std::vector<bool> mask;  // true = masked
    std::vector<std::size_t> kept_indices;

    std::size_t count() const { return tokens.defined() ? tokens.size(0) : 0; }
    std::size_t patch_dim() const { return tokens.defined() ? tokens.size(1) : 0; }
    /// Masked positions in ascending order.
    std::vector<std::size_t> masked_indices() const;
};

std::size_t grid_count(const Grid& grid);

/// Time-major cuboids; each row flattens (dt, dy, dx, c) row-major.
TokenBatch patchify(const Video& v, const VideoPatch& p);
/// Frequency-major patches; each row flattens (df, dt) row-major.
TokenBatch patchify(const Spectrogram& s, const AudioPatch& p);

/// Inverse of patchify for any N x D_patch matrix laid out on `grid`.
Video unpatchify_video(std::span<const double> tokens, const Grid& grid, const VideoPatch& p, std::size_t channels);
Spectrogram unpatchify_audio(std::span<const double> tokens, const Grid& grid, const AudioPatch& p);

/// Masks floor(ratio * N) positions sampled without replacement.
TokenBatch mask_tokens(TokenBatch batch, double ratio, Rng& rng);

}  // namespace xkd
