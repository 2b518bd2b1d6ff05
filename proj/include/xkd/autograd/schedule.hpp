// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace xkd {

enum class ScheduleKind { WarmupCosine, Cosine, Constant };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& text);

/// Scalar schedule over [0, total_steps].
///
/// WarmupCosine ramps linearly 0 -> base over warmup_steps, then follows a
/// half cosine base -> final. Cosine ignores warmup_steps. Both hit `final`
/// exactly at total_steps.
struct Schedule {
    double base = 0.0;
    double final = 0.0;
    std::uint64_t warmup_steps = 0;
    std::uint64_t total_steps = 1;
    ScheduleKind kind = ScheduleKind::Constant;

    static Schedule constant(double value, std::uint64_t total_steps = 1);
    static Schedule cosine(double base, double final, std::uint64_t total_steps);
    static Schedule warmup_cosine(double base, double final, std::uint64_t warmup_steps, std::uint64_t total_steps);
};

double schedule_value(const Schedule& s, std::uint64_t step);

}  // namespace xkd
