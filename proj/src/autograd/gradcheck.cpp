// SPDX-License-Identifier: Apache-2.0
#include "xkd/autograd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "xkd/core/error.hpp"

namespace xkd {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
    NoGradGuard guard;
    const Tensor out = f(inputs);
    if (out.numel() != 1) throw ContractError("grad_check: function must return a scalar");
    return out.item();
}

}  // namespace

GradCheckResult grad_check_detailed(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
    require(eps > 0.0, "grad_check: eps must be positive");
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(t.clone(true));

    const Tensor out = f(leaves);
    if (out.numel() != 1) throw ContractError("grad_check: function must return a scalar");
    out.backward();

    const double base = out.item();
    if (evaluate(f, leaves) != base) throw OracleError("grad_check: function is not deterministic");

    GradCheckResult result;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        Tensor& leaf = leaves[i];
        std::vector<double> analytic = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                                       : std::vector<double>(leaf.numel(), 0.0);
        auto values = leaf.mutable_values();
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double original = values[k];
            values[k] = original + eps;
            const double plus = evaluate(f, leaves);
            values[k] = original - eps;
            const double minus = evaluate(f, leaves);
            values[k] = original;

            const double numeric = (plus - minus) / (2.0 * eps);
            const double denom = std::max({1.0, std::abs(analytic[k]), std::abs(numeric)});
            double err = std::abs(analytic[k] - numeric) / denom;
            if (std::isnan(err)) err = INFINITY;
            if (err >= result.max_relative_error) result = {err, i, k, analytic[k], numeric};
        }
    }
    return result;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
    return grad_check_detailed(f, inputs, eps).max_relative_error;
}

}  // namespace xkd
