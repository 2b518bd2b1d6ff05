// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xkd {

/// Deterministic random stream.
///
/// Wraps std::mt19937_64 but derives floats from the raw 64-bit output with
/// hand-written transforms, so draws do not depend on the standard library's
/// distribution implementations. Streams are forked by name from a root seed;
/// forking is stateless, which keeps ablations and resumed runs on identical
/// randomness wherever their code paths coincide.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    /// Independent child stream identified by (seed, name, index).
    static Rng stream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p);
    double normal();
    /// Normal(0, std) truncated to [-2 std, 2 std].
    double truncated_normal(double std);
    /// First `k` entries of a uniformly random permutation of 0..n-1.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

}  // namespace xkd
