// SPDX-License-Identifier: Apache-2.0
#include "xkd/autograd/optim.hpp"

#include <cmath>
#include <string>

#include "xkd/core/error.hpp"

namespace xkd {

OptimizerState OptimizerState::for_params(const std::vector<Tensor>& params, std::pair<double, double> betas,
                                          double weight_decay, Schedule lr_schedule) {
    require(betas.first > 0.0 && betas.first < 1.0 && betas.second > 0.0 && betas.second < 1.0,
            "optimizer: betas must lie in (0, 1)");
    require(weight_decay >= 0.0, "optimizer: weight decay must be non-negative");
    OptimizerState s;
    s.betas = betas;
    s.weight_decay = weight_decay;
    s.lr_schedule = lr_schedule;
    for (const auto& p : params) {
        s.first_moment.emplace_back(p.numel(), 0.0);
        s.second_moment.emplace_back(p.numel(), 0.0);
    }
    return s;
}

void optimizer_step(const std::vector<Tensor>& params, OptimizerState& state) {
    require(params.size() == state.first_moment.size() && params.size() == state.second_moment.size(),
            "optimizer: parameter count does not match moment buffers");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw ContractError("optimizer: parameter " + std::to_string(i) + " has no gradient");
        }
        if (state.first_moment[i].size() != params[i].numel()) {
            throw ContractError("optimizer: moment buffer " + std::to_string(i) + " does not match parameter shape");
        }
    }
    const double lr = schedule_value(state.lr_schedule, std::min(state.step_count, state.lr_schedule.total_steps));
    const std::uint64_t t = state.step_count + 1;
    const auto [b1, b2] = state.betas;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    const double decay = 1.0 - lr * state.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto values = p.mutable_values();
        const auto grad = p.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double g = grad[k];
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            values[k] = values[k] * decay - lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
    state.step_count = t;
}

void zero_grads(const std::vector<Tensor>& params) {
    for (Tensor p : params) p.clear_grad();
}

}  // namespace xkd
