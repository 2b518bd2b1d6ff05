// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "xkd/autograd/tensor.hpp"
#include "xkd/core/rng.hpp"

namespace xkd::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0, double offset = 0.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = offset + scale * rng.normal();
    return Tensor(std::move(shape), std::move(v));
}

inline Tensor uniform_tensor(Rng& rng, Shape shape, double lo, double hi) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

/// Random probability rows (Dirichlet-like via normalized exponentials).
inline Tensor random_simplex(Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            v[r * cols + c] = -std::log(1.0 - rng.uniform());
            z += v[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] /= z;
    }
    return Tensor({rows, cols}, std::move(v));
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

/// Fresh per-process scratch path; the file itself is not created.
inline std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("xkd_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace xkd::testing
