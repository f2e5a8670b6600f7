#pragma once

#include <stdexcept>
#include <string>

namespace midas {

// Shape or size mismatch between inputs.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// c = Phi^T 1 is (numerically) zero, so the sum-to-one constraint has no solution.
struct DegenerateConstraintError : std::domain_error {
    using std::domain_error::domain_error;
};

// A matrix that must be positive definite was not, or a computed quantity went nonfinite.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace midas
