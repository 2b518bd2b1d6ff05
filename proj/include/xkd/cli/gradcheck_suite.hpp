// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace xkd {

/// One finite-difference check; `run` returns the max relative error for a seed.
struct GradcheckItem {
    std::string name;  // dotted, e.g. "op.matmul" or "loss.mmd"
    std::function<double(std::uint64_t seed)> run;
};

class GradcheckRegistry {
public:
    void add(GradcheckItem item);
    const std::vector<GradcheckItem>& items() const { return items_; }

    /// Every op kind, every loss, and the encoder/decoder/projector composites.
    static GradcheckRegistry standard();

private:
    std::vector<GradcheckItem> items_;
};

/// True when `filter` is the full name, its first component, or its last one.
bool gradcheck_matches(const std::string& name, const std::string& filter);

struct GradcheckOutcome {
    std::string name;
    double max_error = 0.0;  // over all seeds
    std::uint64_t worst_seed = 0;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// Runs the matching items (all when `only` is empty) on seeds 0..seeds-1.
std::vector<GradcheckOutcome> run_gradcheck(const GradcheckRegistry& registry, std::uint64_t seeds,
                                            const std::vector<std::string>& only = {});

}  // namespace xkd
