// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "xkd/autograd/tensor.hpp"

namespace xkd {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// The function under test returned different values for identical inputs.
class OracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_entry = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares backprop gradients of `f` against central differences over every
/// entry of every input. Error per entry is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// `inputs` are used as templates only: the check runs on private leaf copies
/// with requires_grad set, so callers' tensors are left untouched.
GradCheckResult grad_check_detailed(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5);

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace xkd
