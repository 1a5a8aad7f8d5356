#ifndef DYNSIR_COMMON_HPP
#define DYNSIR_COMMON_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dynsir {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, configuration or arguments.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed to converge or left its accuracy envelope.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Outbreak conditioning gave up after exhausting its restart budget.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, std::uint64_t discarded)
        : Error(what), discarded_runs(discarded) {}
    std::uint64_t discarded_runs;
};

} // namespace dynsir

#endif
