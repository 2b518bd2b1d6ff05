// SPDX-License-Identifier: Apache-2.0
#include "xkd/views/embed.hpp"

#include "xkd/autograd/init.hpp"
#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"

namespace xkd {

PositionalLayout::PositionalLayout(const std::vector<Grid>& grids) {
    for (const auto& g : grids) add(g);
}

void PositionalLayout::add(const Grid& grid) {
    if (contains(grid)) return;
    regions_.emplace_back(grid, rows_);
    rows_ += grid_count(grid);
}

bool PositionalLayout::contains(const Grid& grid) const {
    for (const auto& [g, off] : regions_)
        if (g == grid) return true;
    return false;
}

std::size_t PositionalLayout::offset(const Grid& grid) const {
    for (const auto& [g, off] : regions_)
        if (g == grid) return off;
    throw ContractError("positional table has no region for grid " + shape_string(grid));
}

EmbedParams EmbedParams::init(std::size_t patch_dim, std::size_t d_model, PositionalLayout layout, Rng& rng) {
    EmbedParams p;
    p.weight = trunc_normal_param({patch_dim, d_model}, rng);
    p.bias = zero_param({1, d_model});
    p.pos = trunc_normal_param({layout.rows(), d_model}, rng);
    p.cls = trunc_normal_param({1, d_model}, rng);
    p.layout = std::move(layout);
    return p;
}

Tensor embed(const TokenBatch& batch, const EmbedParams& params, bool drop_masked) {
    require(batch.patch_dim() == params.weight.size(0),
            "embed: token length " + std::to_string(batch.patch_dim()) + " does not match projection input " +
                std::to_string(params.weight.size(0)));
    const std::size_t base = params.layout.offset(batch.grid);
    require(base + batch.count() <= params.pos.size(0), "embed: positional table too small");

    std::vector<std::size_t> rows;
    if (drop_masked) {
        rows = batch.kept_indices;
    } else {
        rows.resize(batch.count());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    }
    std::vector<std::size_t> pos_rows(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) pos_rows[i] = base + rows[i];

    const Tensor cls_row = ops::add(params.cls, ops::slice(params.pos, 0, 0, 1));
    if (rows.empty()) return cls_row;
    const Tensor picked = ops::gather_rows(batch.tokens, rows);
    const Tensor projected = ops::add(ops::matmul(picked, params.weight), params.bias);
    const Tensor tokens = ops::add(projected, ops::gather_rows(params.pos, pos_rows));
    return ops::concat({cls_row, tokens}, 0);
}

}  // namespace xkd
