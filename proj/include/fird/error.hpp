#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fird {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad files, malformed CSV/JSON, mismatched shapes. Surfaces as exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class DimensionError : public InputError {
public:
    using InputError::InputError;
};

/// A metric that is undefined for the given labels (e.g. ROC-AUC with one class).
class MetricError : public InputError {
public:
    using InputError::InputError;
};

/// Non-finite intermediate inside an optimizer. Surfaces as exit code 1.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::size_t iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

}  // namespace fird
