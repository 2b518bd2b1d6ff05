// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xkd/autograd/schedule.hpp"
#include "xkd/autograd/tensor.hpp"

namespace xkd {

/// Adam with decoupled weight decay.
struct OptimizerState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step_count = 0;
    std::pair<double, double> betas{0.9, 0.95};
    double weight_decay = 0.3;
    double eps = 1e-8;
    Schedule lr_schedule = Schedule::constant(1e-4);

    /// Zeroed moments shaped like `params`.
    static OptimizerState for_params(const std::vector<Tensor>& params, std::pair<double, double> betas,
                                     double weight_decay, Schedule lr_schedule);
};

/// One update of every parameter. The learning rate is
/// schedule_value(lr_schedule, step_count) evaluated before incrementing.
/// Every parameter must hold a gradient.
void optimizer_step(const std::vector<Tensor>& params, OptimizerState& state);

void zero_grads(const std::vector<Tensor>& params);

}  // namespace xkd
