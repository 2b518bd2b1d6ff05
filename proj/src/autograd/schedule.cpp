// SPDX-License-Identifier: Apache-2.0
#include "xkd/autograd/schedule.hpp"

#include <cmath>
#include <numbers>

#include "xkd/core/error.hpp"

namespace xkd {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::WarmupCosine: return "warmup-cosine";
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::Constant: return "constant";
    }
    return "constant";
}

ScheduleKind parse_schedule_kind(const std::string& text) {
    if (text == "warmup-cosine") return ScheduleKind::WarmupCosine;
    if (text == "cosine") return ScheduleKind::Cosine;
    if (text == "constant") return ScheduleKind::Constant;
    throw ContractError("unknown schedule kind '" + text + "'");
}

Schedule Schedule::constant(double value, std::uint64_t total_steps) {
    return {value, value, 0, total_steps, ScheduleKind::Constant};
}

Schedule Schedule::cosine(double base, double final, std::uint64_t total_steps) {
    return {base, final, 0, total_steps, ScheduleKind::Cosine};
}

Schedule Schedule::warmup_cosine(double base, double final, std::uint64_t warmup_steps, std::uint64_t total_steps) {
    return {base, final, warmup_steps, total_steps, ScheduleKind::WarmupCosine};
}

double schedule_value(const Schedule& s, std::uint64_t step) {
    require(s.total_steps > 0, "schedule: total_steps must be positive");
    if (step > s.total_steps) {
        throw ContractError("schedule: step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
    }
    if (s.kind == ScheduleKind::Constant) return s.base;

    const std::uint64_t warmup = s.kind == ScheduleKind::WarmupCosine ? s.warmup_steps : 0;
    if (step < warmup) {
        return s.base * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (step == s.total_steps) return s.final;
    const std::uint64_t span = s.total_steps - warmup;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
    return s.final + (s.base - s.final) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace xkd
