#pragma once

#include <stdexcept>
#include <string>

namespace resobj {

/// Raised when an operation is called with arguments that break its contract
/// (shape mismatch, invalid configuration, out-of-range class id).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a primitive is evaluated outside its mathematical domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when a computation produces a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed or incompatible files (checkpoints, configs, dumps).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace resobj
