// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "xkd/autograd/tensor.hpp"
#include "xkd/core/rng.hpp"
#include "xkd/views/tokens.hpp"

namespace xkd {

/// Row 0 belongs to CLS; each registered grid owns a contiguous block after it.
class PositionalLayout {
public:
    PositionalLayout() = default;
    explicit PositionalLayout(const std::vector<Grid>& grids);

    /// No-op when the grid is already registered.
    void add(const Grid& grid);
    /// First row of the grid's block. Unregistered grids are a contract error.
    std::size_t offset(const Grid& grid) const;
    bool contains(const Grid& grid) const;
    std::size_t rows() const { return rows_; }
    const std::vector<std::pair<Grid, std::size_t>>& regions() const { return regions_; }

private:
    std::vector<std::pair<Grid, std::size_t>> regions_;
    std::size_t rows_ = 1;
};

struct EmbedParams {
    Tensor weight;  // D_patch x D_model
    Tensor bias;    // 1 x D_model
    Tensor pos;     // layout.rows() x D_model
    Tensor cls;     // 1 x D_model
    PositionalLayout layout;

    static EmbedParams init(std::size_t patch_dim, std::size_t d_model, PositionalLayout layout, Rng& rng);
    std::vector<Tensor> parameters() const { return {weight, bias, pos, cls}; }
};

/// (M + 1) x D_model sequence with CLS first. Each token adds the positional
/// row of its original grid index, so dropped tokens are never read.
Tensor embed(const TokenBatch& batch, const EmbedParams& params, bool drop_masked);

}  // namespace xkd
