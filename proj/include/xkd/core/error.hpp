// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace xkd {

/// Violated precondition or postcondition of a public operation.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Incompatible tensor extents.
class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Argument outside the mathematical domain of an operation (log/sqrt of a negative).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or incompatible file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A loss or metric became NaN/Inf during training.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractError(message);
}

}  // namespace xkd
